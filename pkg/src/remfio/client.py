"""POSIX-like remote file client: rf_open / rf_read / rf_seek / rf_close.

One ClientHandle speaks for one open file and implements the four read-mode
behaviours:

  NORMAL    one ReadRequest round trip per rf_read call, no client buffer.
  READBUF   internal buffer of iobufsize; a miss issues exactly one fill
            request of min(iobufsize, bytes to EOF) at the miss position.
  READAHEAD READBUF plus server push: after open the server streams chunks
            down the control connection; the client serves reads from the
            pushed flow, discards pushed bytes that precede a forward seek
            target, and interrupt-restarts the stream on a backward seek.
  STREAM    a second (data) connection carries the pushed chunks; a
            background receiver feeds rf_read through a bounded queue; any
            out-of-position seek interrupt-restarts the stream.

Pushed chunks carry their file offset, and both push modes track the next
offset the live stream will deliver. A chunk whose offset does not match is
a leftover from before a restart and is dropped; because any restarted
stream re-reads the same file sequentially, this single rule keeps the
delivered byte sequence exact across seeks in both directions.

Counters per handle: open_time, read_time, bytes_consumed, bytes_wire
(DataChunk payload bytes that actually arrived over the network, including
pushed bytes the client later discarded). The transfer rate reported at
close is bytes_consumed / (open_time + read_time).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (
    AuthError,
    ChannelClosedError,
    ConnectionClosedError,
    NotFoundError,
    ProtocolError,
    QueueOverflowError,
    RangeError,
    StaleHandleError,
    StaleReplicaError,
    TransportError,
)
from .headnode import DEFAULT_NS_PORT, DEFAULT_OPEN_PORT, session_token
from .netemu import WAN_PROFILE, LinkProfile
from .wire import (
    CloseRequest,
    ControlInterrupt,
    DataChunk,
    ErrorCode,
    ErrorReply,
    NsLookup,
    NsLookupReply,
    OpenReply,
    OpenRequest,
    ReadMode,
    StreamStart,
)
from .wire import ReadRequest

_ERROR_TYPES = {
    ErrorCode.NOT_FOUND: NotFoundError,
    ErrorCode.AUTH: AuthError,
    ErrorCode.QUEUE_OVERFLOW: QueueOverflowError,
    ErrorCode.STALE_REPLICA: StaleReplicaError,
    ErrorCode.STALE_HANDLE: StaleHandleError,
    ErrorCode.RANGE: RangeError,
}

_RECEIVER_QUEUE_CHUNKS = 4


def _expect(msg, want):
    """Narrow a reply to the wanted type, surfacing ErrorReply as a typed
    exception."""
    if isinstance(msg, ErrorReply):
        exc = _ERROR_TYPES.get(ErrorCode(msg.code), ProtocolError)
        raise exc(msg.detail)
    if not isinstance(msg, want):
        raise ProtocolError(
            f"expected {want.__name__}, got {type(msg).__name__}")
    return msg


@dataclass
class ClientConfig:
    """Everything a client needs to reach and speak to the installation."""

    runtime: object
    network: object
    headnode: str = "head"
    token: str = ""
    mode: ReadMode = ReadMode.NORMAL
    iobufsize: int = 131072
    emulated_window: int = 1024 * 1024
    profile: LinkProfile = WAN_PROFILE
    ns_port: int = DEFAULT_NS_PORT
    open_port: int = DEFAULT_OPEN_PORT

    def __post_init__(self) -> None:
        if self.iobufsize <= 0:
            raise ValueError("iobufsize must be positive")
        if self.emulated_window <= 0:
            raise ValueError("emulated_window must be positive")


@dataclass
class HandleCounters:
    open_time: float = 0.0
    read_time: float = 0.0
    bytes_consumed: int = 0
    bytes_wire: int = 0

    @property
    def rate(self) -> float:
        """bytes_consumed / (open_time + read_time); 0 when nothing moved."""
        denom = self.open_time + self.read_time
        if denom <= 0.0 or self.bytes_consumed == 0:
            return 0.0
        return self.bytes_consumed / denom


class ClientHandle:
    """One open remote file. Single-session: no concurrent calls."""

    def __init__(self, config: ClientConfig, path: str, handle_id: int,
                 file_size: int, control, data=None, chunk_queue=None) -> None:
        self._config = config
        self._rt = config.runtime
        self.path = path
        self.handle_id = handle_id
        self.mode = config.mode
        self.iobufsize = config.iobufsize
        self.file_size = file_size
        self.logical_position = 0
        self.counters = HandleCounters()
        self.double_close = False
        self.request_count = 0  # ReadRequests issued (NORMAL calls and fills)
        self._control = control
        self._data = data
        self._chunks = chunk_queue
        self._buf = b""
        self._buf_start = 0
        self._expected = 0  # next offset the live push stream will deliver
        self._stream_done = False
        self._wire_mark = 0
        self._closed = False

    # -- counters ------------------------------------------------------------

    def _wire_total(self) -> int:
        total = self._control.delivered_payload
        if self._data is not None:
            total += self._data.delivered_payload
        return total

    def _sync_wire(self) -> None:
        now = self._wire_total()
        self.counters.bytes_wire += now - self._wire_mark
        self._wire_mark = now

    # -- read ------------------------------------------------------------------

    def read(self, length: int) -> bytes:
        """Return up to `length` bytes from the current position.

        Short only at EOF; advances the position by what was returned.
        """
        if self._closed:
            raise StaleHandleError(f"read on closed handle {self.handle_id}")
        if length <= 0:
            raise ValueError("read length must be positive")
        t0 = self._rt.now()
        try:
            if self.mode is ReadMode.NORMAL:
                data = self._read_normal(length)
            elif self.mode is ReadMode.READBUF:
                data = self._read_buffered(length)
            else:
                data = self._read_pushed(length)
        finally:
            self.counters.read_time += self._rt.now() - t0
            self._sync_wire()
        self.counters.bytes_consumed += len(data)
        self.logical_position += len(data)
        return data

    def _read_normal(self, length: int) -> bytes:
        pos = self.logical_position
        self._control.send(ReadRequest(self.handle_id, pos, length))
        self.request_count += 1
        expected = min(length, max(0, self.file_size - pos))
        if expected == 0:
            reply = _expect(self._control.recv(), DataChunk)
            if reply.payload != b"":
                raise ProtocolError("expected empty chunk at EOF")
            return b""
        parts = bytearray()
        while len(parts) < expected:
            parts.extend(_expect(self._control.recv(), DataChunk).payload)
        return bytes(parts)

    def _read_buffered(self, length: int) -> bytes:
        pos = self.logical_position
        end = min(pos + length, self.file_size)
        out = bytearray()
        while pos < end:
            taken = self._take_from_buffer(pos, end, out)
            if taken:
                pos += taken
            else:
                self._fill(pos)
        return bytes(out)

    def _take_from_buffer(self, pos: int, end: int, out: bytearray) -> int:
        start = self._buf_start
        stop = start + len(self._buf)
        if not start <= pos < stop:
            return 0
        take = min(end, stop) - pos
        off = pos - start
        out += self._buf[off:off + take]
        return take

    def _fill(self, pos: int) -> None:
        """READBUF buffer miss: one request of iobufsize, clamped at EOF."""
        n = min(self.iobufsize, self.file_size - pos)
        self._control.send(ReadRequest(self.handle_id, pos, n))
        self.request_count += 1
        buf = bytearray()
        while len(buf) < n:
            buf += _expect(self._control.recv(), DataChunk).payload
        self._buf = bytes(buf)
        self._buf_start = pos

    def _read_pushed(self, length: int) -> bytes:
        pos = self.logical_position
        end = min(pos + length, self.file_size)
        out = bytearray()
        while pos < end:
            taken = self._take_from_buffer(pos, end, out)
            if taken:
                pos += taken
                continue
            chunk = self._next_pushed_chunk()
            if chunk is None:
                break  # terminator; only reachable with pos at EOF
            offset, payload = chunk
            if offset + len(payload) <= pos:
                continue  # wholly before the position: skipped-over bytes
            self._buf = payload
            self._buf_start = offset
        return bytes(out)

    def _next_pushed_chunk(self) -> tuple[int, bytes] | None:
        """Next in-sequence chunk of the live stream; None at stream end."""
        while True:
            if self.mode is ReadMode.STREAM:
                try:
                    msg = self._chunks.get()
                except ChannelClosedError:
                    raise TransportError("data connection lost") from None
            else:
                msg = self._control.recv()
            msg = _expect(msg, DataChunk)
            if msg.offset != self._expected:
                continue  # stale chunk from before a stream restart
            if msg.payload == b"":
                self._stream_done = True
                return None
            self._expected = msg.offset + len(msg.payload)
            return msg.offset, msg.payload

    # -- seek ------------------------------------------------------------------

    def seek(self, offset: int) -> int:
        """Move the logical position; returns the new (always correct)
        position."""
        if self._closed:
            raise StaleHandleError(f"seek on closed handle {self.handle_id}")
        if not 0 <= offset <= self.file_size:
            raise RangeError(
                f"seek to {offset} outside [0, {self.file_size}]")
        if self.mode is ReadMode.STREAM:
            if offset != self.logical_position:
                self._restart_stream(offset)
        elif self.mode is ReadMode.READAHEAD:
            start = self._buf_start
            if start <= offset < start + len(self._buf):
                pass  # buffer retained; reads keep serving from it
            elif offset < self._expected:
                # the stream has already passed this offset
                self._restart_stream(offset)
            else:
                self._buf = b""  # ahead of the stream: let the push catch up
        self.logical_position = offset
        return self.logical_position

    def _restart_stream(self, offset: int) -> None:
        self._control.send(ControlInterrupt(self.handle_id))
        self._control.send(StreamStart(self.handle_id, offset))
        self._expected = offset
        self._buf = b""
        self._buf_start = offset
        self._stream_done = False

    # -- close -----------------------------------------------------------------

    def close(self) -> HandleCounters:
        """Stop any stream, tear down connections, freeze and return
        counters."""
        if self._closed:
            self.double_close = True
            return self.counters
        self._closed = True
        try:
            if (self.mode in (ReadMode.READAHEAD, ReadMode.STREAM)
                    and not self._stream_done):
                self._control.send(ControlInterrupt(self.handle_id))
            self._control.send(CloseRequest(self.handle_id))
        except TransportError:
            pass
        self._sync_wire()
        self._control.close()
        if self._data is not None:
            self._data.close()
        if self._chunks is not None:
            self._chunks.close()  # releases a receiver parked on a full queue
        return self.counters


def rf_open(path: str, config: ClientConfig) -> ClientHandle:
    """Open a remote file: namespace lookup, brokered open, disk session.

    Push modes additionally start their stream before this returns. The
    whole sequence is timed into the handle's open_time counter.
    """
    rt, net = config.runtime, config.network
    t0 = rt.now()

    conn = net.connect(f"{config.headnode}:{config.ns_port}", config.profile,
                       first_msg=NsLookup(path),
                       window=config.emulated_window)
    try:
        located = _expect(conn.recv(), NsLookupReply)
    finally:
        conn.close()

    conn = net.connect(f"{config.headnode}:{config.open_port}", config.profile,
                       first_msg=OpenRequest(path, config.mode,
                                             config.iobufsize, config.token),
                       window=config.emulated_window)
    try:
        brokered = _expect(conn.recv(), OpenReply)
    finally:
        conn.close()

    handle_id = brokered.handle_id
    control = net.connect(located.replica_address, config.profile,
                          first_msg=OpenRequest(
                              path, config.mode, config.iobufsize,
                              session_token(handle_id, config.token)),
                          window=config.emulated_window)
    try:
        opened = _expect(control.recv(), OpenReply)
    except BaseException:
        control.close()
        raise

    data = None
    chunk_queue = None
    if config.mode is ReadMode.READAHEAD:
        control.send(StreamStart(handle_id, 0))
    elif config.mode is ReadMode.STREAM:
        data = net.connect(located.replica_address, config.profile,
                           first_msg=StreamStart(handle_id, 0),
                           window=config.emulated_window)
        chunk_queue = rt.channel(capacity=_RECEIVER_QUEUE_CHUNKS)
        rt.spawn(_stream_receiver, data, chunk_queue,
                 name=f"rf-recv-{handle_id}")

    handle = ClientHandle(config, path, handle_id, opened.file_size,
                          control, data, chunk_queue)
    handle.counters.open_time = rt.now() - t0
    return handle


def _stream_receiver(conn, queue) -> None:
    """Background task: drains the data connection into the bounded queue."""
    try:
        while True:
            queue.put(conn.recv())
    except (ConnectionClosedError, ChannelClosedError):
        pass
    finally:
        queue.close()


def rf_read(handle: ClientHandle, length: int) -> bytes:
    return handle.read(length)


def rf_seek(handle: ClientHandle, offset: int) -> int:
    return handle.seek(offset)


def rf_close(handle: ClientHandle) -> HandleCounters:
    return handle.close()
