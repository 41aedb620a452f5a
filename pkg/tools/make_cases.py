"""Generate the vendored 30- and 57-bus case fixtures.

Run from the repository root:

    python tools/make_cases.py

The networks are synthetic ring-plus-chord systems sized like the classic
IEEE test cases (bus counts, generator counts, load totals, capacity
margins).  They exist to exercise dimensional scaling; the 2- and 6-bus
fixtures carry the hand-checked numbers.  Output is deterministic.
"""

import json
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "mpqpnet" / "cases"


def ring_with_chords(n_bus, chords, seed):
    rng = np.random.default_rng(seed)
    branches = []
    for i in range(1, n_bus + 1):
        j = i + 1 if i < n_bus else 1
        x = round(float(rng.uniform(0.05, 0.35)), 4)
        branches.append({"from": i, "to": j, "susceptance": round(1.0 / x, 6)})
    for i, j in chords:
        x = round(float(rng.uniform(0.05, 0.35)), 4)
        branches.append({"from": i, "to": j, "susceptance": round(1.0 / x, 6)})
    return branches


def spread_loads(load_buses, total, seed):
    rng = np.random.default_rng(seed)
    raw = rng.uniform(0.5, 1.5, size=len(load_buses))
    scaled = raw / raw.sum() * total
    return {bus: round(float(d), 4) for bus, d in zip(load_buses, scaled)}


def build_case(name, n_bus, chords, gens, load_buses, load_total, seed):
    loads = spread_loads(load_buses, load_total, seed + 1)
    buses = [{"id": i, "demand": loads.get(i, 0.0)} for i in range(1, n_bus + 1)]
    return {
        "schema_version": 1,
        "name": name,
        "base_mva": 100.0,
        "ref_bus": 1,
        "buses": buses,
        "branches": ring_with_chords(n_bus, chords, seed),
        "generators": gens,
    }


def main():
    case30 = build_case(
        "case30",
        n_bus=30,
        chords=[(1, 15), (5, 20), (10, 25), (3, 28), (8, 17), (12, 22),
                (6, 27), (4, 12), (14, 24), (19, 29), (2, 16)],
        gens=[
            {"bus": 1, "q": 200.0, "c": 200.0, "pmin": 0.0, "pmax": 0.8},
            {"bus": 2, "q": 175.0, "c": 175.0, "pmin": 0.0, "pmax": 0.8},
            {"bus": 13, "q": 300.0, "c": 100.0, "pmin": 0.0, "pmax": 0.8},
            {"bus": 22, "q": 90.0, "c": 325.0, "pmin": 0.0, "pmax": 0.5},
            {"bus": 23, "q": 250.0, "c": 300.0, "pmin": 0.0, "pmax": 0.3},
            {"bus": 27, "q": 220.0, "c": 280.0, "pmin": 0.0, "pmax": 0.55},
        ],
        load_buses=[3, 4, 5, 7, 8, 10, 12, 14, 15, 16, 17, 18, 19, 20,
                    21, 24, 26, 29, 30, 25],
        load_total=1.892,
        seed=30,
    )
    case57 = build_case(
        "case57",
        n_bus=57,
        chords=[(1, 15), (1, 17), (3, 15), (4, 18), (5, 29), (7, 29),
                (8, 22), (9, 55), (10, 51), (11, 43), (12, 41), (13, 49),
                (14, 46), (18, 31), (20, 33), (22, 38), (24, 26), (25, 30),
                (28, 52), (34, 50), (37, 39)],
        gens=[
            {"bus": 1, "q": 80.0, "c": 200.0, "pmin": 0.0, "pmax": 5.75},
            {"bus": 2, "q": 400.0, "c": 1100.0, "pmin": 0.0, "pmax": 1.0},
            {"bus": 3, "q": 300.0, "c": 900.0, "pmin": 0.0, "pmax": 1.4},
            {"bus": 6, "q": 350.0, "c": 1000.0, "pmin": 0.0, "pmax": 1.0},
            {"bus": 8, "q": 60.0, "c": 150.0, "pmin": 0.0, "pmax": 5.5},
            {"bus": 9, "q": 380.0, "c": 1050.0, "pmin": 0.0, "pmax": 1.0},
            {"bus": 12, "q": 90.0, "c": 250.0, "pmin": 0.0, "pmax": 4.1},
        ],
        load_buses=[b for b in range(1, 58) if b not in
                    (1, 2, 3, 6, 8, 9, 12, 4, 7, 11, 21, 22, 24, 26, 34, 36, 37, 39, 40, 45, 46, 48)],
        load_total=12.508,
        seed=57,
    )
    OUT.mkdir(parents=True, exist_ok=True)
    for case in (case30, case57):
        path = OUT / f"{case['name']}.json"
        path.write_text(json.dumps(case, indent=2) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
