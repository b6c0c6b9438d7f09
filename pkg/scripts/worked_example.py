"""Map the 16x32 multiply, print the report and the structural Verilog.

    python scripts/worked_example.py [--out DIR]
"""

import argparse
from pathlib import Path

from churchmap import DEFAULT_ARCH, emit_verilog, load_source, map_design

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--design", default=str(ROOT / "designs" / "mul16x32.v"))
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    m = load_source(args.design)
    net, report = map_design(m, DEFAULT_ARCH)
    print(report.to_text())
    text = emit_verilog(net)
    print(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"{m.name}.mapped.v").write_text(text)


if __name__ == "__main__":
    main()
