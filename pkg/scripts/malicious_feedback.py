"""MAE versus the share of malicious feedback at fixed malicious-service ratios."""

from _common import parser, save, source

from qostrust import datasets as ds
from qostrust import evaluation as ev

FEEDBACK = [0.1, 0.3, 0.5, 0.7, 0.9]


def main():
    p = parser(__doc__)
    p.add_argument("--service-ratios", type=float, nargs="+", default=[0.1, 0.3, 0.5, 0.7, 0.9])
    args = p.parse_args()
    for ratio in args.service_ratios:
        report = ev.sweep_malicious(
            source(args), FEEDBACK, axis="malicious_feedback_ratio", trials=args.trials, seed=args.seed,
            adversary=ds.AdversarySpec(malicious_service_ratio=ratio),
        )
        save(report, args.out, f"feedback_at_{int(round(ratio * 100))}")


if __name__ == "__main__":
    main()
