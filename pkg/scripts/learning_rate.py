"""Epochs for the level classifier to reach a target output MAE, per learning rate."""

from _common import parser, save, source

from qostrust import evaluation as ev


def main():
    p = parser(__doc__)
    p.add_argument("--grid", type=float, nargs="+", default=[0.01, 0.05, 0.1, 0.5])
    p.add_argument("--target", type=float, default=0.10)
    args = p.parse_args()
    report = ev.sweep_learning_rate(source(args), args.grid, target=args.target, trials=args.trials, seed=args.seed)
    save(report, args.out, "learning_rate")


if __name__ == "__main__":
    main()
