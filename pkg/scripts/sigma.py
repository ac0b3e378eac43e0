"""MAE across smoothing factors at learning rate 0.1 and 30% malicious services."""

from _common import parser, save, source

from qostrust import datasets as ds
from qostrust import evaluation as ev


def main():
    p = parser(__doc__)
    p.add_argument("--grid", type=float, nargs="+", default=[0.01, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0])
    args = p.parse_args()
    report = ev.sweep_sigma(
        source(args), args.grid, trials=args.trials, seed=args.seed, learning_rate=0.1,
        adversary=ds.AdversarySpec(malicious_service_ratio=0.3),
    )
    save(report, args.out, "sigma")
    print(f"# minimum at sigma={report.annotations['argmin']:g}, interior={report.annotations['interior']}")


if __name__ == "__main__":
    main()
