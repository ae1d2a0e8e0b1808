#!/usr/bin/env python3
"""Side-by-side diff of two coverage reports (report.json from `ivegan train`
or `ivegan eval`), typically IVE-GAN against the vanilla baseline.

Usage:
    python scripts/compare_reports.py runs/ring/report.json runs/ring_vanilla/report.json
"""
import argparse
import json
import sys

FIELDS = ("covered_modes", "assigned_fraction", "jsd", "n_samples")


def load_report(path: str) -> dict:
    with open(path) as f:
        data = json.load(f)
    missing = [k for k in FIELDS + ("per_mode_counts",) if k not in data]
    if missing:
        raise ValueError(f"{path}: not a coverage report, missing {missing}")
    if sum(data["per_mode_counts"]) > data["n_samples"]:
        raise ValueError(
            f"{path}: per-mode counts sum to {sum(data['per_mode_counts'])}, "
            f"more than n_samples={data['n_samples']}"
        )
    return data


def main():
    p = argparse.ArgumentParser()
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--label-a", default="a")
    p.add_argument("--label-b", default="b")
    args = p.parse_args()

    a = load_report(args.a)
    b = load_report(args.b)
    if len(a["per_mode_counts"]) != len(b["per_mode_counts"]):
        print("ERROR: reports cover different mode counts", file=sys.stderr)
        sys.exit(1)

    la, lb = args.label_a, args.label_b
    print(f"{'':18s} {la:>12s} {lb:>12s}")
    for k in FIELDS:
        print(f"{k:18s} {a[k]:>12.4g} {b[k]:>12.4g}")
    print("per-mode share:")
    for i, (ca, cb) in enumerate(zip(a["per_mode_counts"], b["per_mode_counts"])):
        sa, sb = ca / a["n_samples"], cb / b["n_samples"]
        flag = "  <-- empty" if min(sa, sb) < a["min_share"] else ""
        print(f"  mode {i}:         {sa:>12.3f} {sb:>12.3f}{flag}")


if __name__ == "__main__":
    main()
