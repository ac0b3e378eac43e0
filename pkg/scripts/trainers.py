"""Cost of backprop versus weight perturbation on the clean level task, in per-sample passes."""

from _common import parser, source

from qostrust import evaluation as ev


def main():
    p = parser(__doc__)
    p.add_argument("--target", type=float, default=0.05, help="MSE threshold")
    p.add_argument("--steps", type=int, default=1000, help="perturbation step budget")
    args = p.parse_args()
    runs = ev.compare_trainers(
        source(args), range(args.seed, args.seed + args.trials),
        acceptable_error=args.target, perturbation_steps=args.steps,
    )
    print("seed,trainer,epochs,sample_passes,reached,final_mse")
    for pair in runs:
        for run in pair:
            print(f"{run.seed},{run.trainer.value},{run.epochs},{run.sample_passes},{run.reached},{run.final_loss:.6f}")


if __name__ == "__main__":
    main()
