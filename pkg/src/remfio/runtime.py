"""Execution runtimes: deterministic virtual time and wall-clock threads.

Component code (servers, clients, the network emulator) is written in plain
blocking style against this module's small surface: now/sleep/spawn, Channel,
Mutex, and a rate limiter. Two interchangeable implementations exist:

* VirtualRuntime — a discrete-event scheduler. Tasks are carried by real
  threads but exactly one is ever runnable: the running task hands the baton
  to the next scheduled task whenever it sleeps or blocks. Time is a float
  that jumps straight to the next event, so a simulated minute of transfers
  costs milliseconds, and identical inputs give bit-identical schedules.

* WallRuntime — the same surface over time.sleep and ordinary threads, used
  for demonstration runs over real sockets.

Timer callbacks (VirtualRuntime.call_at) run inline during dispatch and must
never block; unbounded Channel.put and try_put are safe there.
"""

from __future__ import annotations

import heapq
import threading
import time
import warnings
from collections import deque
from typing import Any, Callable

from .errors import ChannelClosedError, DeadlockError


class _TaskShutdown(BaseException):
    """Raised inside parked tasks when the runtime shuts down."""


class Task:
    """Handle to a spawned activity; join() re-raises the task's exception."""

    def __init__(self, name: str, runtime):
        self.name = name
        self.finished = False
        self.result: Any = None
        self.exc: BaseException | None = None
        self._runtime = runtime
        self._event = threading.Event()
        self._thread: threading.Thread | None = None
        self._join_waiters: list[Task] = []

    def __repr__(self) -> str:
        state = "done" if self.finished else "live"
        return f"<Task {self.name} {state}>"


# ---------------------------------------------------------------------------
# virtual runtime
# ---------------------------------------------------------------------------


class VirtualRuntime:
    """Deterministic discrete-event scheduler with a blocking-call API."""

    def __init__(self) -> None:
        self._now = 0.0
        self._seq = 0
        self._heap: list[tuple[float, int, Any]] = []  # entry: Task or callback
        self._current: Task | None = None
        self._root: Task | None = None
        self._tasks: list[Task] = []
        self._pending: list[Task] = []  # crashed, exception not yet observed
        self._stopping = False
        self._failure: BaseException | None = None
        self._ran = False

    # -- clock ------------------------------------------------------------

    def now(self) -> float:
        return self._now

    def sleep(self, dt: float) -> None:
        if dt < 0:
            raise ValueError(f"negative sleep: {dt}")
        self._switch(self._now + dt)

    def call_at(self, t: float, fn: Callable[[], None]) -> None:
        """Run fn() inline when virtual time reaches t. fn must not block."""
        self._push(max(t, self._now), fn)

    def call_later(self, dt: float, fn: Callable[[], None]) -> None:
        self.call_at(self._now + dt, fn)

    # -- tasks ------------------------------------------------------------

    def spawn(self, fn: Callable, *args, name: str = "task") -> Task:
        task = Task(name, self)
        self._tasks.append(task)
        old_stack = threading.stack_size()
        try:
            threading.stack_size(1 << 20)  # many parked carriers; keep VSZ low
            thread = threading.Thread(
                target=self._task_main, args=(task, fn, args), daemon=True,
                name=f"vrt-{name}",
            )
            task._thread = thread
            thread.start()
        finally:
            threading.stack_size(old_stack)
        self._push(self._now, task)
        return task

    def join(self, task: Task):
        cur = self._current
        while not task.finished:
            task._join_waiters.append(cur)
            self._park()
        if task.exc is not None:
            if task in self._pending:
                self._pending.remove(task)
            raise task.exc
        return task.result

    def run(self, fn: Callable, *args):
        """Execute fn as the root task; returns its result after shutdown.

        A spawned task's exception surfaces at join(); if nothing ever joins
        the task, the exception is re-raised here once fn returns.
        """
        if self._ran:
            raise RuntimeError("runtime instances are single-use")
        self._ran = True
        root = Task("root", self)
        root._thread = threading.current_thread()
        self._root = root
        self._current = root
        try:
            result = fn(*args)
        finally:
            self._shutdown()
        if self._pending:
            raise self._pending[0].exc
        return result

    # -- scheduler internals ------------------------------------------------

    def _push(self, t: float, entry) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, entry))

    def _make_runnable(self, task: Task, delay: float = 0.0) -> None:
        self._push(self._now + delay, task)

    def _park(self) -> None:
        """Block the current task until someone makes it runnable again."""
        self._switch(None)

    def _switch(self, reschedule_at: float | None) -> None:
        if self._stopping:
            # the world is being torn down: cleanup code must not re-park,
            # or it would wait on a wake-up that will never come. _current
            # is meaningless here (threads unwind concurrently), so identify
            # the caller by its thread.
            if (self._root is None
                    or threading.current_thread() is not self._root._thread):
                raise _TaskShutdown()
        cur = self._current
        if reschedule_at is not None:
            self._push(reschedule_at, cur)
        try:
            nxt = self._dispatch()
        except DeadlockError as exc:
            self._abort(exc, cur)
            raise AssertionError("unreachable")  # _abort always raises
        if nxt is cur:
            return
        self._current = nxt
        nxt._event.set()
        cur._event.wait()
        cur._event.clear()
        if self._stopping:
            if cur is self._root and self._failure is not None:
                raise self._failure
            raise _TaskShutdown()

    def _dispatch(self) -> Task:
        while True:
            if not self._heap:
                raise DeadlockError(
                    f"all tasks blocked at t={self._now:.6f}; no pending events"
                )
            t, _seq, entry = heapq.heappop(self._heap)
            if t > self._now:
                self._now = t
            if isinstance(entry, Task):
                return entry
            entry()  # timer callback, runs inline

    def _task_main(self, task: Task, fn: Callable, args: tuple) -> None:
        task._event.wait()
        task._event.clear()
        try:
            if self._stopping:
                raise _TaskShutdown()
            task.result = fn(*args)
        except _TaskShutdown:
            task.finished = True
            return
        except BaseException as exc:
            task.exc = exc
            task.finished = True
            if task._join_waiters:
                for waiter in task._join_waiters:
                    self._make_runnable(waiter)
                task._join_waiters.clear()
            else:
                self._pending.append(task)
            self._finish_dispatch()
            return
        task.finished = True
        for waiter in task._join_waiters:
            self._make_runnable(waiter)
        task._join_waiters.clear()
        self._finish_dispatch()

    def _finish_dispatch(self) -> None:
        """Hand the baton onward as the current task's thread exits."""
        if self._stopping:
            return
        try:
            nxt = self._dispatch()
        except DeadlockError as exc:
            self._abort(exc, None)
            return
        self._current = nxt
        nxt._event.set()

    def _abort(self, deadlock: DeadlockError, cur: Task | None) -> None:
        """Nothing can ever run again: stop the world, surface the cause.

        A crashed-but-unobserved task is a better root cause than the
        deadlock it usually provokes, so pending failures win.
        """
        if self._failure is None:
            if self._pending:
                self._failure = self._pending[0].exc
            else:
                self._failure = deadlock
        self._stopping = True
        for t in self._tasks:
            if not t.finished:
                t._event.set()
        if self._root is not None:
            self._root._event.set()
        if cur is not None:
            if cur is self._root:
                raise self._failure
            raise _TaskShutdown()

    def _shutdown(self) -> None:
        self._stopping = True
        for t in self._tasks:
            if not t.finished:
                t._event.set()
        for t in self._tasks:
            if t._thread is not None:
                t._thread.join(timeout=5.0)
                if t._thread.is_alive():
                    warnings.warn(f"task {t.name!r} survived shutdown",
                                  RuntimeWarning, stacklevel=2)

    # -- coordination primitives -------------------------------------------

    def channel(self, capacity: int | None = None) -> "VirtualChannel":
        return VirtualChannel(self, capacity)

    def mutex(self) -> "Mutex":
        return Mutex(self.channel(capacity=1))

    def rate_limiter(self, rate: float) -> "VirtualRateLimiter":
        return VirtualRateLimiter(self, rate)


class VirtualChannel:
    """FIFO channel; blocking put/get with optional capacity bound."""

    def __init__(self, runtime: VirtualRuntime, capacity: int | None):
        self._rt = runtime
        self._capacity = capacity
        self._items: deque = deque()
        self._getters: deque[Task] = deque()
        self._putters: deque[Task] = deque()
        self._closed = False

    def __len__(self) -> int:
        return len(self._items)

    def put(self, item) -> None:
        rt = self._rt
        while (
            not self._closed
            and self._capacity is not None
            and len(self._items) >= self._capacity
        ):
            self._putters.append(rt._current)
            rt._park()
        if self._closed:
            raise ChannelClosedError("put on closed channel")
        self._items.append(item)
        if self._getters:
            rt._make_runnable(self._getters.popleft())

    def try_put(self, item) -> bool:
        if self._closed:
            raise ChannelClosedError("put on closed channel")
        if self._capacity is not None and len(self._items) >= self._capacity:
            return False
        self._items.append(item)
        if self._getters:
            self._rt._make_runnable(self._getters.popleft())
        return True

    def get(self):
        rt = self._rt
        while not self._items:
            if self._closed:
                raise ChannelClosedError("channel closed and drained")
            self._getters.append(rt._current)
            rt._park()
        item = self._items.popleft()
        if self._putters:
            rt._make_runnable(self._putters.popleft())
        return item

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        rt = self._rt
        while self._getters:
            rt._make_runnable(self._getters.popleft())
        while self._putters:
            rt._make_runnable(self._putters.popleft())


class Mutex:
    """FIFO mutual exclusion built on a capacity-1 channel."""

    def __init__(self, chan):
        self._chan = chan

    def acquire(self) -> None:
        self._chan.put(None)

    def release(self) -> None:
        self._chan.get()

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc):
        self.release()
        return False


class VirtualRateLimiter:
    """Serves byte grants at a sustained rate, round-robin across keys.

    acquire(key, n) returns once the shared resource has spent n/rate seconds
    on this request. One pump task serializes grants; each key has a FIFO
    queue and the ring rotates one grant per turn, so equal-demand keys get
    equal shares.
    """

    def __init__(self, runtime: VirtualRuntime, rate: float):
        if rate <= 0:
            raise ValueError(f"rate must be positive: {rate}")
        self._rt = runtime
        self._rate = rate
        self._queues: dict = {}
        self._ring: deque = deque()
        self._kick = runtime.channel(capacity=1)
        self._pump_task = runtime.spawn(self._pump, name="rate-pump")
        self.granted_log: list[tuple[float, Any, int]] | None = None

    def record_grants(self) -> None:
        """Enable the (time, key, nbytes) grant log for cap/fairness tests."""
        self.granted_log = []

    def acquire(self, key, nbytes: int) -> None:
        if nbytes <= 0:
            return
        rt = self._rt
        waiter = rt.channel(capacity=1)
        q = self._queues.get(key)
        if q is None:
            q = self._queues[key] = deque()
        if not q:
            self._ring.append(key)
        q.append((nbytes, waiter))
        self._kick.try_put(None)
        waiter.get()

    def _pump(self) -> None:
        rt = self._rt
        while True:
            if not self._ring:
                self._kick.get()
                continue
            key = self._ring.popleft()
            q = self._queues[key]
            nbytes, waiter = q.popleft()
            if q:
                self._ring.append(key)
            if self._rate != float("inf"):
                rt.sleep(nbytes / self._rate)
            if self.granted_log is not None:
                self.granted_log.append((rt.now(), key, nbytes))
            waiter.put(None)


# ---------------------------------------------------------------------------
# wall-clock runtime
# ---------------------------------------------------------------------------


class WallRuntime:
    """Same surface as VirtualRuntime over real threads and time.sleep."""

    def __init__(self) -> None:
        self._t0 = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._t0

    def sleep(self, dt: float) -> None:
        if dt > 0:
            time.sleep(dt)

    def spawn(self, fn: Callable, *args, name: str = "task") -> Task:
        task = Task(name, self)

        def main():
            try:
                task.result = fn(*args)
            except BaseException as exc:
                task.exc = exc
            finally:
                task.finished = True

        thread = threading.Thread(target=main, daemon=True, name=f"wrt-{name}")
        task._thread = thread
        thread.start()
        return task

    def join(self, task: Task):
        task._thread.join()
        if task.exc is not None:
            raise task.exc
        return task.result

    def run(self, fn: Callable, *args):
        return fn(*args)

    def channel(self, capacity: int | None = None) -> "WallChannel":
        return WallChannel(capacity)

    def mutex(self) -> Mutex:
        return Mutex(self.channel(capacity=1))

    def rate_limiter(self, rate: float) -> "WallRateLimiter":
        return WallRateLimiter(self, rate)


class WallChannel:
    """Thread-safe FIFO channel matching VirtualChannel's API."""

    def __init__(self, capacity: int | None):
        self._capacity = capacity
        self._items: deque = deque()
        self._cond = threading.Condition()
        self._closed = False

    def __len__(self) -> int:
        with self._cond:
            return len(self._items)

    def put(self, item) -> None:
        with self._cond:
            while (
                not self._closed
                and self._capacity is not None
                and len(self._items) >= self._capacity
            ):
                self._cond.wait()
            if self._closed:
                raise ChannelClosedError("put on closed channel")
            self._items.append(item)
            self._cond.notify_all()

    def try_put(self, item) -> bool:
        with self._cond:
            if self._closed:
                raise ChannelClosedError("put on closed channel")
            if self._capacity is not None and len(self._items) >= self._capacity:
                return False
            self._items.append(item)
            self._cond.notify_all()
            return True

    def get(self):
        with self._cond:
            while not self._items:
                if self._closed:
                    raise ChannelClosedError("channel closed and drained")
                self._cond.wait()
            item = self._items.popleft()
            self._cond.notify_all()
            return item

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class WallRateLimiter:
    """Token-bucket limiter; approximate wall-clock analogue of the pump."""

    def __init__(self, runtime: WallRuntime, rate: float):
        if rate <= 0:
            raise ValueError(f"rate must be positive: {rate}")
        self._rt = runtime
        self._rate = rate
        self._lock = threading.Lock()
        self._tokens = 0.0
        self._burst = max(rate * 0.05, 256 * 1024.0)
        self._last = runtime.now()
        self.granted_log = None

    def record_grants(self) -> None:
        self.granted_log = []

    def acquire(self, key, nbytes: int) -> None:
        if nbytes <= 0 or self._rate == float("inf"):
            return
        while True:
            with self._lock:
                now = self._rt.now()
                self._tokens = min(
                    self._burst, self._tokens + (now - self._last) * self._rate
                )
                self._last = now
                if self._tokens >= nbytes:
                    self._tokens -= nbytes
                    if self.granted_log is not None:
                        self.granted_log.append((now, key, nbytes))
                    return
                deficit = nbytes - self._tokens
            self._rt.sleep(deficit / self._rate)


Channel = VirtualChannel | WallChannel
