"""Train CDC on a one-dimensional point mass and compare it with the data.

Run: python3 demos/02_train.py  (about a minute on one core)

A noisy "medium" controller logs 5000 transitions. CDC then learns only
from that log. The printed curve shows the critic's mean and max Q, and the
deployment return at each evaluation.
"""

from cdcrl.cdc import CdcConfig, train
from cdcrl.envs import dataset_episode_return, generate_dataset, make_env
from cdcrl.numerics import tune_allocator

tune_allocator()
env = make_env("PointMass1D")
data = generate_dataset(env, "medium", 5000, seed=0)
print(f"dataset: {len(data)} transitions, average episode return "
      f"{dataset_episode_return(data):.2f}")

cfg = CdcConfig(hidden=(64, 64), total_steps=3000, log_interval=500, eval_interval=1000)
print("\n step   td_loss   mean_q   max_q    return")


def show(rec):
    ret = "" if rec.eval_return is None else f"{rec.eval_return:8.2f}"
    print(f"{rec.step:5d}  {rec.td_loss:8.4f}  {rec.mean_q:7.2f}  {rec.max_q:6.2f}  {ret}")


agent, _ = train(cfg, data, env, on_record=show)
