"""Measure engine throughput on the demo scene (ticks per second)."""

import argparse
import time
from importlib import resources

from immerse import load_world, parse_scenario, parse_scene


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--repeats", type=int, default=10)
    args = p.parse_args()
    data = resources.files("immerse") / "data"
    scene = parse_scene((data / "demo.scene").read_bytes())
    scenario = parse_scenario((data / "demo.scn").read_bytes())
    times = []
    for _ in range(args.repeats):
        world = load_world(scene)
        world.keep_records = False
        start = time.perf_counter()
        world.run_scenario(scenario)
        times.append(time.perf_counter() - start)
    ticks = world.tick
    best, mean = min(times), sum(times) / len(times)
    print(f"{ticks} ticks; best {ticks / best:,.0f} ticks/s, mean {ticks / mean:,.0f} ticks/s over {args.repeats} runs")


if __name__ == "__main__":
    main()
