"""Identification ratio versus the share of malicious services, with the majority baseline alongside."""

from _common import parser, save, source

from qostrust import evaluation as ev

RATIOS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]


def main():
    args = parser(__doc__).parse_args()
    report = ev.sweep_malicious(source(args), RATIOS, trials=args.trials, seed=args.seed)
    save(report, args.out, "malicious_ratio")
    means = report.column("mean_ratio")
    print(f"# average {sum(means) / len(means):.4f}, std across ratios {ev.sample_std(means):.4f}")
    baseline = ev.sweep_malicious(
        source(args), RATIOS, trials=args.trials, seed=args.seed,
        identifier_factory=lambda cfg: ev.MajorityIdentifier(),
    )
    save(baseline, args.out, "malicious_ratio_majority")


if __name__ == "__main__":
    main()
