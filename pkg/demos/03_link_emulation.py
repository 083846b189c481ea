"""
Round trips, shared pipes, and windows
======================================

The emulated network shapes traffic three ways: connections cost a round
trip to set up, all same-direction transfers on a link share its
bandwidth, and each connection may keep only a window's worth of bytes in
flight. This walkthrough serves a blob of data through two very different
link profiles and watches the virtual clock.
"""

from remfio.netemu import EmulatedNetwork, LinkProfile
from remfio.runtime import VirtualRuntime
from remfio.wire import DataChunk

MiB = 1024 * 1024

# A long fat pipe (wide-area) and a short one (machine room). Bandwidth is
# bytes per second shared across connections; the window caps in-flight
# bytes per connection.
wan = LinkProfile("demo-wan", rtt=0.012, shared_bandwidth=100 * MiB,
                  per_connection_window=MiB)
lan = LinkProfile("demo-lan", rtt=0.0002, shared_bandwidth=119 * MiB,
                  per_connection_window=MiB)

rt = VirtualRuntime()


def scenario():
    net = EmulatedNetwork(rt)

    def blob_service(conn):
        # Data frames are credit flow-controlled: reserve one per chunk and
        # park until the receiver's consumption returns credits.
        kicks = rt.channel(capacity=1)
        conn.on_data_credit = lambda: kicks.try_put(None)

        def send_chunk(offset, payload):
            while not conn.try_reserve_data_credit():
                kicks.get()
            conn.send(DataChunk(handle_id=1, offset=offset, payload=payload),
                      credit_reserved=True)

        # Ship 8 MiB as a run of capped chunks, then the empty terminator.
        for i in range(32):
            send_chunk(i * 256 * 1024, b"\0" * (256 * 1024))
        send_chunk(8 * MiB, b"")

    net.listen("blob:1", blob_service)

    def fetch(profile, label):
        t0 = rt.now()
        conn = net.connect("blob:1", profile)
        got = 0
        while True:
            chunk = conn.recv()
            if not chunk.payload:
                break
            got += len(chunk.payload)
        conn.close()
        dt = rt.now() - t0
        print(f"{label:18s} {got / MiB:.0f} MiB in {dt:.3f}s virtual "
              f"-> {got / MiB / dt:6.1f} MiB/s")
        return dt

    # Alone on the link, the transfer runs at nearly the full link rate;
    # the round-trip cost shows up as a constant on top.
    fetch(wan, "one client, wan")
    fetch(lan, "one client, lan")

    # Two concurrent transfers on the same link split its bandwidth, so
    # each one takes about twice as long.
    done = rt.channel()
    for i in range(2):
        rt.spawn(lambda i=i: done.put(fetch(wan, f"shared, client {i}")))
    for _ in range(2):
        done.get()

    # Squeezing the window throttles a single connection to roughly
    # window / rtt even though the link itself has room to spare.
    tiny = LinkProfile("demo-tiny-window", rtt=0.012,
                       shared_bandwidth=100 * MiB,
                       per_connection_window=64 * 1024)
    print(f"window/rtt ceiling: {64 * 1024 / 0.012 / MiB:.2f} MiB/s")
    fetch(tiny, "64 KiB window")


rt.run(scenario)
