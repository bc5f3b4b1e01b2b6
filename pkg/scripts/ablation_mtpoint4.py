"""Run all four correction functions on MTPoint-4 and print the summary table.

    python scripts/ablation_mtpoint4.py --seeds 0
"""

from pathlib import Path

from tsac import harness

from _common import base_config, parser, seeds


def main():
    args = parser(__doc__, "mtpoint4_desk.yaml").parse_args()
    base = base_config(args)
    for s in seeds(args):
        root = Path(base.out_dir) / "ablation" / f"seed{s}"
        rows = harness.ablation_sweep(base.replace(seed=s, out_dir=str(root)))
        print(f"seed {s}")
        for r in rows:
            print(f"  {r['variant']:>14}  final {r['final_success']:.3f}  best {r['best_success']:.3f}  {r['status']}")


if __name__ == "__main__":
    main()
