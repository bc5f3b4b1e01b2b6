"""Early-budget comparison of TSAC and multi-task SAC on MTPoint-10.

    python scripts/sample_efficiency_mtpoint10.py --seeds 0,1,2,3
"""

from pathlib import Path

from tsac import harness

from _common import base_config, parser, print_table, save, seeds


def main():
    args = parser(__doc__, "mtpoint10_desk.yaml").parse_args()
    base = base_config(args)
    entrants = {
        "tsac": harness.multi_seed(base.replace(algo="tsac"), seeds(args), "tsac"),
        "mtsac": harness.multi_seed(base.replace(algo="mtsac"), seeds(args), "mtsac"),
    }
    budget = base.total_iterations * base.trainer.rollout_steps * 10
    result = harness.compare(entrants, [budget // 2, budget], base.smoothing_window)
    print_table(result)
    save(Path(base.out_dir) / "compare.json", result)


if __name__ == "__main__":
    main()
