"""
A clock that only moves when everyone waits
===========================================

The whole system runs on a cooperative scheduler with a virtual clock:
sleeping advances simulated time, not wall time. A multi-second scenario
with dozens of tasks finishes in milliseconds of real time and replays
identically on every run, which is what makes the network experiments
reproducible down to the byte.
"""

import time

from remfio.runtime import VirtualRuntime

rt = VirtualRuntime()


def scenario():
    # Tasks communicate over bounded channels; put blocks when full,
    # get blocks when empty, and blocking is what lets time jump forward.
    jobs = rt.channel(capacity=2)
    results = rt.channel()

    def worker(name):
        while True:
            job = jobs.get()
            if job is None:
                return
            rt.sleep(0.25)  # a quarter second of pretend work
            results.put((rt.now(), name, job))

    for name in ("alpha", "beta"):
        rt.spawn(worker, name)

    for job in range(6):
        jobs.put(job)
    jobs.put(None)
    jobs.put(None)

    for _ in range(6):
        stamp, name, job = results.get()
        print(f"t={stamp:.2f}s  {name} finished job {job}")
    print(f"virtual clock at end: {rt.now():.2f}s")


wall0 = time.perf_counter()
rt.run(scenario)
wall = time.perf_counter() - wall0

# Six quarter-second jobs across two workers: 0.75 virtual seconds,
# almost no real ones.
print(f"wall clock spent: {wall * 1000:.1f} ms")
