"""Unit disc, N = 2: runs configs/cone2d.cfg through the CLI and prints the oracle errors.

Takes about three minutes (the p = 256 solve dominates).
"""
import json
import sys
from pathlib import Path

from infeig.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else str(ROOT / "out" / "cone2d")
    code = main(["solve", str(ROOT / "configs" / "cone2d.cfg"), "--out", out, "--quiet"])
    bundle = json.loads((Path(out) / "results.json").read_text())
    oracle = next(d for d in bundle["diagnostics"] if d["name"] == "cone oracle")
    for c in oracle["checks"]:
        print(f"{c['name']}: {c['value']:.4g} (bound {c['bound']:.4g})")
    print("Lambda_1024", bundle["summary"]["Lambda_inf_estimate"], "exit", code)
    sys.exit(code)
