#!/usr/bin/env python3
"""Regenerates the bundled feeder, its manifest and the synthetic weather year.

Counts and depths in the manifest are computed here, independently of the
Rust loader, so the loader tests can use the manifest as their oracle.
"""
import json
import math
import os
import random
from collections import deque

HERE = os.path.dirname(os.path.abspath(__file__))
HOUSES_PER_KVA = 0.2


def round_half_up(x):
    return int(math.floor(x + 0.5))


def build_feeder():
    rng = random.Random(123)
    buses = [{"id": "150", "base_voltage_v": 2401.777, "x": 0.0, "y": 0.0}]
    lines = []
    counter = [0]

    def new_bus(x, y):
        counter[0] += 1
        bid = "%03d" % counter[0]
        buses.append({"id": bid, "base_voltage_v": 2401.777, "x": round(x, 3), "y": round(y, 3)})
        return bid

    def connect(a, b, r, x):
        lines.append({"from": a, "to": b, "r_pu": r, "x_pu": x})

    trunk = ["150"]
    for i in range(1, 13):
        b = new_bus(i * 10.0, 0.0)
        connect(trunk[-1], b, 0.0010, 0.0024)
        trunk.append(b)

    laterals = []
    for i, tb in enumerate(trunk[1:], start=1):
        for side in (1.0, -1.0):
            length = rng.randint(3, 5)
            prev = tb
            for k in range(1, length + 1):
                b = new_bus(i * 10.0 + side * 1.5, side * 6.0 * k)
                connect(prev, b, 0.0022, 0.0030)
                prev = b
                laterals.append((b, i, side, k))
            if len(buses) >= 100:
                break
        if len(buses) >= 100:
            break

    # sub-laterals hanging off the far ends of some laterals
    rng2 = random.Random(7)
    ends = [l for l in laterals if l[3] >= 3]
    rng2.shuffle(ends)
    for (b, i, side, k) in ends:
        if len(buses) >= 120:
            break
        prev = b
        for j in range(1, 4):
            if len(buses) >= 120:
                break
            nb = new_bus(i * 10.0 + 3.0 * j, side * 6.0 * k + side * 2.0)
            connect(prev, nb, 0.0030, 0.0032)
            prev = nb

    non_source = [b["id"] for b in buses[1:]]
    rng3 = random.Random(99)
    tx_buses = sorted(rng3.sample(non_source, 85))
    bus_x = {b["id"]: b["x"] for b in buses}
    transformers = []
    customers = []
    pre_disaggregated = set(tx_buses[:: 17])
    for bid in tx_buses:
        rating = rng3.choice([25.0, 25.0, 37.5, 50.0])
        # location-based adoption probabilities: east side adopts faster
        xpos = bus_x[bid]
        if xpos < 40.0:
            p_pv, p_ev = 0.02, 0.05
        elif xpos < 80.0:
            p_pv, p_ev = 0.05, 0.10
        else:
            p_pv, p_ev = 0.10, 0.02
        tid = "xf_" + bid
        lumped = round(rating * rng3.uniform(0.55, 0.75), 3)
        if bid in pre_disaggregated:
            houses = max(1, round_half_up(rating * HOUSES_PER_KVA))
            for k in range(houses):
                customers.append({
                    "id": "c_%s_%02d" % (bid, k + 1),
                    "transformer": tid,
                    "base_load_kw": round(lumped / houses, 6),
                    "p_pv": p_pv,
                    "p_ev": p_ev,
                })
            lumped = 0.0
        transformers.append({
            "id": tid, "bus": bid, "rating_kva": rating, "lumped_load_kw": lumped,
            "p_pv": p_pv, "p_ev": p_ev,
        })
    return {
        "source_bus": "150",
        "buses": buses,
        "lines": lines,
        "transformers": transformers,
        "customers": customers,
    }


def manifest_for(feeder):
    children = {b["id"]: [] for b in feeder["buses"]}
    for l in feeder["lines"]:
        children[l["from"]].append(l["to"])
        children[l["to"]].append(l["from"])
    depth = {feeder["source_bus"]: 0}
    q = deque([feeder["source_bus"]])
    while q:
        u = q.popleft()
        for v in children[u]:
            if v not in depth:
                depth[v] = depth[u] + 1
                q.append(v)
    lumped = [t for t in feeder["transformers"] if t["lumped_load_kw"] > 0]
    served = {c["transformer"] for c in feeder["customers"]}
    new_customers = sum(
        max(1, round_half_up(t["rating_kva"] * HOUSES_PER_KVA))
        for t in lumped if t["id"] not in served
    )
    total = sum(t["lumped_load_kw"] for t in feeder["transformers"]) + sum(
        c["base_load_kw"] for c in feeder["customers"])
    return {
        "buses": len(feeder["buses"]),
        "lines": len(feeder["lines"]),
        "transformers": len(feeder["transformers"]),
        "customers": len(feeder["customers"]),
        "lumped_transformers": len(lumped),
        "max_depth": max(depth.values()),
        "reachable_buses": len(depth),
        "houses_per_kva": HOUSES_PER_KVA,
        "customers_after_disaggregation": len(feeder["customers"]) + new_customers,
        "total_base_load_kw": total,
    }


def weather():
    rng = random.Random(2024)
    rows = []
    for day in range(365):
        season = math.cos(2.0 * math.pi * (day - 172) / 365.0)  # 1 at summer solstice
        daylength = 12.0 + 3.0 * season
        sunrise = 12.0 - daylength / 2.0
        peak = 0.82 + 0.18 * season
        cloud = rng.choice([1.0, 1.0, 1.0, 0.85, 0.6, 0.35])
        t_mean = 12.0 + 10.0 * season
        for h in range(24):
            mid = h + 0.5
            x = (mid - sunrise) / daylength
            if 0.0 < x < 1.0:
                irr = peak * math.sin(math.pi * x) * cloud * rng.uniform(0.9, 1.0)
            else:
                irr = 0.0
            irr = min(1.0, max(0.0, irr))
            temp = t_mean + 6.0 * math.sin(2.0 * math.pi * (h - 9) / 24.0)
            rows.append((day * 24 + h, irr, temp))
    return rows


def main():
    feeder = build_feeder()
    with open(os.path.join(HERE, "feeder123.json"), "w") as f:
        json.dump(feeder, f, indent=1)
        f.write("\n")
    with open(os.path.join(HERE, "feeder123.manifest.json"), "w") as f:
        json.dump(manifest_for(feeder), f, indent=1)
        f.write("\n")
    with open(os.path.join(HERE, "weather_synthetic.csv"), "w") as f:
        f.write("hour,irradiance,temp_c\n")
        for h, irr, temp in weather():
            f.write("%d,%.6f,%.3f\n" % (h, irr, temp))


if __name__ == "__main__":
    main()
