"""
Training the offloading actor
=============================

The actor sees the task information and each sampled cache group, proposes
offload bits per group, and the best group is executed.  A few rounds are
enough to see the exploring policy move towards serving cached requests.
"""
from freshedge.config import EnvConfig
from freshedge.ppo import Hyperparams, make_agent, train_agent

cfg = EnvConfig(num_users=3, num_services=5)
hp = Hyperparams(rounds=6, hidden=(64, 64), episode_length=32)
agent = make_agent("ppo", cfg, hp)
curve = train_agent(agent, progress=lambda r, m, s: print(
    f"round {r}: greedy reward {m:.4g}  critic loss {s['critic_loss']:.3g}"))
print("behaviour reward per round:", [f"{b:.4g}" for b in curve.behaviour_reward])
