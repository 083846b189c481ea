"""In-process network emulator: RTT, shared bandwidth, per-connection windows.

Connections between in-process endpoints are shaped by a LinkProfile:

* one-way latency of rtt/2 on every frame, rtt on connection setup;
* shared_bandwidth split round-robin among connections actively
  transmitting in the same direction of the same named link;
* a per-connection in-flight window: at most `window` un-acknowledged
  bytes, each slice's share returning one rtt after the slice is admitted
  (ack clocking), which yields the steady-state cap of exactly window/rtt;
* a 16-frame in-flight cap on DataChunk frames per connection (receiver
  flow control); senders reserve a credit before transmitting a chunk and
  the credit returns rtt/2 after the receiver application consumes it.

Requires a VirtualRuntime: timing is event-driven and bit-deterministic.
Wall-clock runs over real sockets live in remfio.socknet instead.

The steady per-connection throughput is min(fair bandwidth share,
window/rtt); throughput_cap() computes it for planning and assertions.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .errors import ConnectionClosedError, EndpointRefusedError, TransportError
from .runtime import VirtualRuntime
from .wire import DataChunk, Message, encode_frame

MiB = 1024 * 1024

DATA_CREDITS = 16  # max in-flight unconsumed DataChunk frames per connection


@dataclass(frozen=True)
class LinkProfile:
    """Shaping parameters for one named link."""

    name: str
    rtt: float  # seconds, round trip
    shared_bandwidth: float  # bytes/s, all same-direction connections combined
    per_connection_window: int  # bytes in flight per connection

    def __post_init__(self):
        if self.rtt < 0:
            raise ValueError(f"rtt must be >= 0: {self.rtt}")
        if self.shared_bandwidth <= 0:
            raise ValueError(f"shared_bandwidth must be > 0: {self.shared_bandwidth}")
        if self.per_connection_window <= 0:
            raise ValueError(f"window must be > 0: {self.per_connection_window}")


WAN_PROFILE = LinkProfile("wan", rtt=0.012, shared_bandwidth=100 * MiB,
                          per_connection_window=1 * MiB)
LAN_PROFILE = LinkProfile("lan", rtt=0.0002, shared_bandwidth=119 * MiB,
                          per_connection_window=1 * MiB)
ZERO_PROFILE = LinkProfile("zero", rtt=0.0, shared_bandwidth=float("inf"),
                           per_connection_window=1 << 62)


def builtin_profiles() -> dict[str, LinkProfile]:
    return {p.name: p for p in (WAN_PROFILE, LAN_PROFILE, ZERO_PROFILE)}


def load_profiles(path) -> dict[str, LinkProfile]:
    """Load profiles from an INI file: [name] rtt_ms, bandwidth_bytes_per_s,
    window_bytes. Returns builtins plus/overridden-by the file's entries."""
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    profiles = builtin_profiles()
    for section in cp.sections():
        profiles[section] = LinkProfile(
            name=section,
            rtt=cp.getfloat(section, "rtt_ms") / 1000.0,
            shared_bandwidth=cp.getfloat(section, "bandwidth_bytes_per_s"),
            per_connection_window=cp.getint(section, "window_bytes"),
        )
    return profiles


def throughput_cap(profile: LinkProfile, active_connections: int) -> float:
    """Steady-state per-connection ceiling in bytes/s."""
    if active_connections < 1:
        raise ValueError("active_connections must be >= 1")
    share = profile.shared_bandwidth / active_connections
    if profile.rtt == 0:
        return share
    return min(share, profile.per_connection_window / profile.rtt)


class _ClosedSentinel:
    pass


_CLOSED = _ClosedSentinel()


class EmulatedNetwork:
    """Registry of listening services plus shared per-link bandwidth pumps."""

    def __init__(self, runtime: VirtualRuntime):
        if not hasattr(runtime, "call_later"):
            raise TypeError("EmulatedNetwork needs a VirtualRuntime "
                            "(wall-clock mode uses remfio.socknet)")
        self._rt = runtime
        self._services: dict[str, object] = {}
        self._pumps: dict = {}
        self._conn_seq = 0

    def listen(self, address: str, handler) -> None:
        """Register handler(conn) to be spawned for each inbound connection."""
        if address in self._services:
            raise ValueError(f"address already listening: {address}")
        self._services[address] = handler

    def connect(
        self,
        address: str,
        profile: LinkProfile,
        *,
        first_msg: Message | None = None,
        window: int | None = None,
    ) -> "EmuConnection":
        """Open a shaped connection; costs one rtt before it returns.

        first_msg, when given, rides the handshake (the reply can arrive as
        soon as 1 rtt after the call, instead of rtt for setup plus another
        round trip).
        """
        rt = self._rt
        t0 = rt.now()
        handler = self._services.get(address)
        if handler is None:
            rt.sleep(profile.rtt)
            raise EndpointRefusedError(f"no listener at {address}")
        self._conn_seq += 1
        cid = self._conn_seq
        w = window if window is not None else profile.per_connection_window
        near = EmuConnection(self, profile, w, f"c{cid}i", address)
        far = EmuConnection(self, profile, w, f"c{cid}a", address)
        near._peer = far
        far._peer = near
        rt.call_later(profile.rtt / 2, lambda: rt.spawn(
            handler, far, name=f"srv-{address}-{cid}"))
        if first_msg is not None:
            near.send(first_msg)
        elapsed = rt.now() - t0
        if elapsed < profile.rtt:
            rt.sleep(profile.rtt - elapsed)
        return near

    def _pump_for(self, profile: LinkProfile, direction: str):
        key = (profile.name, direction)
        pump = self._pumps.get(key)
        if pump is None:
            pump = self._rt.rate_limiter(profile.shared_bandwidth)
            self._pumps[key] = pump
        return pump


class EmuConnection:
    """One end of an emulated connection.

    sent_bytes / delivered_bytes count whole frames; sent_payload /
    delivered_payload count DataChunk payload bytes only (the package-wide
    bytes-on-wire statistic).
    """

    def __init__(self, net: EmulatedNetwork, profile: LinkProfile,
                 window: int, conn_id: str, address: str):
        self._net = net
        self._rt = net._rt
        self.profile = profile
        self.conn_id = conn_id
        self.address = address
        self._peer: EmuConnection | None = None
        # direction key: frames sent by the initiating end share one pump,
        # frames sent by accepting ends (the servers) share the other
        self._direction = "fwd" if conn_id.endswith("i") else "rev"
        self._queue = net._rt.channel()
        self._send_mutex = net._rt.mutex()
        self._window_avail = window
        self._window_kick = net._rt.channel(capacity=1)
        self._credits = DATA_CREDITS
        self.on_data_credit = None  # callback, fired on credit return
        self._closed = False
        self._peer_closed = False
        self.sent_bytes = 0
        self.sent_payload = 0
        self.delivered_bytes = 0
        self.delivered_payload = 0
        self.delivery_log: list[tuple[float, int]] | None = None

    def record_deliveries(self) -> None:
        self.delivery_log = []

    # -- flow-control credits (DataChunk frames only) ----------------------

    def try_reserve_data_credit(self) -> bool:
        if self._credits > 0:
            self._credits -= 1
            return True
        return False

    def _return_credit(self) -> None:
        self._credits += 1
        cb = self.on_data_credit
        if cb is not None:
            cb()

    # -- data path ----------------------------------------------------------

    def send(self, msg: Message, *, credit_reserved: bool = False) -> None:
        """Transmit one frame; blocks for window space and bandwidth share.

        DataChunk frames must have a credit reserved beforehand via
        try_reserve_data_credit (receiver flow control); all other message
        types bypass credits.
        """
        if self._closed:
            raise TransportError(f"send on closed connection {self.conn_id}")
        if self._peer_closed:
            raise TransportError(f"peer closed {self.conn_id}")
        if isinstance(msg, DataChunk) and not credit_reserved:
            raise TransportError("DataChunk sends require a reserved credit")
        frame_len = len(encode_frame(msg))
        rt = self._rt
        pump = self._net._pump_for(self.profile, self._direction)
        with self._send_mutex:
            remaining = frame_len
            while remaining > 0:
                while self._window_avail <= 0:
                    self._window_kick.get()
                    if self._closed or self._peer_closed:
                        raise TransportError(
                            f"connection {self.conn_id} closed mid-send")
                take = min(remaining, self._window_avail)
                self._window_avail -= take
                rt.call_later(self.profile.rtt, self._release_window(take))
                pump.acquire(self.conn_id, take)  # returns at transmit end
                remaining -= take
            self.sent_bytes += frame_len
            if isinstance(msg, DataChunk):
                self.sent_payload += len(msg.payload)
            peer = self._peer
            rt.call_later(self.profile.rtt / 2,
                          lambda: peer._deliver(msg, frame_len))

    def _release_window(self, nbytes: int):
        def cb():
            self._window_avail += nbytes
            self._window_kick.try_put(None)
        return cb

    def _deliver(self, msg: Message, frame_len: int) -> None:
        if self._closed:
            return  # receiver gone; bytes vanish
        self.delivered_bytes += frame_len
        if isinstance(msg, DataChunk):
            self.delivered_payload += len(msg.payload)
        if self.delivery_log is not None:
            self.delivery_log.append((self._rt.now(), frame_len))
        self._queue.put((msg, frame_len))

    def recv(self) -> Message:
        """Next in-order message; raises ConnectionClosedError at stream end."""
        if self._closed:
            raise ConnectionClosedError(f"recv on closed connection {self.conn_id}")
        if self._peer_closed and len(self._queue) == 0:
            raise ConnectionClosedError(f"peer closed {self.conn_id}")
        item = self._queue.get()
        if item is _CLOSED:
            self._peer_closed = True
            raise ConnectionClosedError(f"peer closed {self.conn_id}")
        msg, _frame_len = item
        if isinstance(msg, DataChunk):
            peer = self._peer
            self._rt.call_later(self.profile.rtt / 2, peer._return_credit)
        return msg

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        peer = self._peer
        self._rt.call_later(self.profile.rtt / 2, lambda: peer._notify_closed())
        self._window_kick.try_put(None)  # unwedge a blocked sender

    def _notify_closed(self) -> None:
        if self._closed:
            return
        self._peer_closed = True
        self._queue.put(_CLOSED)
        # wake anything parked on window space or credits so it can bail out
        self._window_kick.try_put(None)
        cb = self.on_data_credit
        if cb is not None:
            cb()

    @property
    def closed(self) -> bool:
        """True once either end has closed; sends will fail, recv drains."""
        return self._closed or self._peer_closed
