"""
The same stack over real sockets
================================

Everything so far ran in virtual time. For sanity against reality, the
wall-clock transport runs the identical headnode, disk server, and client
over loopback TCP: real threads, real sockets, token-bucket pacing for
bandwidth, sleeps for latency. TCP's own backpressure stands in for the
emulator's window and credit accounting, so timings are approximate where
virtual time is exact; the bytes are the same either way.
"""

import tempfile
import time
from pathlib import Path

from remfio.client import ClientConfig, rf_close, rf_open, rf_read, rf_seek
from remfio.content import content_chunks, file_content
from remfio.diskserver import DiskServer
from remfio.headnode import Headnode
from remfio.netemu import LinkProfile
from remfio.runtime import WallRuntime
from remfio.socknet import SocketNetwork
from remfio.wire import ReadMode

KiB = 1024
MiB = 1024 * 1024
SIZE = 2 * MiB
TOKEN = "demo"

# 2 ms round trips, effectively unlimited bandwidth: enough shaping to be
# visible, little enough that the demo stays quick.
profile = LinkProfile("loopback", rtt=0.002, shared_bandwidth=float("inf"),
                      per_connection_window=MiB)

rt = WallRuntime()
net = SocketNetwork(rt)
head = Headnode(rt, net, shared_token=TOKEN)
head.start()

with tempfile.TemporaryDirectory() as tmp:
    srv = DiskServer(rt, net, pool_dir=Path(tmp), shared_token=TOKEN)
    srv.start()
    pf = srv.import_file("/pool/blob", content_chunks(1, 0, SIZE))
    head.register_file("/pool/blob", SIZE, srv.address, pf.checksum)
    expected = file_content(1, 0, SIZE)

    cfg = ClientConfig(rt, net, token=TOKEN, mode=ReadMode.STREAM,
                       profile=profile)
    t0 = time.perf_counter()
    h = rf_open("/pool/blob", cfg)
    got = bytearray()
    while True:
        block = rf_read(h, 128 * KiB)
        if not block:
            break
        got += block

    # seeks work over TCP too, including backward ones that restart the push
    rf_seek(h, 100 * KiB)
    check = rf_read(h, KiB)
    c = rf_close(h)
    wall = time.perf_counter() - t0

    print(f"streamed {len(got) / MiB:.0f} MiB over loopback TCP in "
          f"{wall:.2f}s wall")
    print("content matches the seeded generator:",
          bytes(got) == expected and check == expected[100 * KiB:101 * KiB])
    print(f"counters: open {c.open_time * 1000:.1f} ms, "
          f"read {c.read_time * 1000:.1f} ms, wire {c.bytes_wire} B")

net.close()
