"""TSAC vs multi-task SAC on MTPoint-4 over several seeds.

    python scripts/e2e_mtpoint4.py --seeds 0,1,2,3
"""

from pathlib import Path

from tsac import harness

from _common import base_config, parser, print_table, save, seeds


def main():
    args = parser(__doc__, "mtpoint4_desk.yaml").parse_args()
    base = base_config(args)
    entrants = {
        "tsac": harness.multi_seed(base.replace(algo="tsac"), seeds(args), "tsac"),
        "mtsac": harness.multi_seed(base.replace(algo="mtsac"), seeds(args), "mtsac"),
    }
    budget = base.total_iterations * base.trainer.rollout_steps * 4
    checkpoints = [budget // 4, budget // 2, budget]
    result = harness.compare(entrants, checkpoints, base.smoothing_window)
    print_table(result)
    save(Path(base.out_dir) / "compare.json", result)


if __name__ == "__main__":
    main()
