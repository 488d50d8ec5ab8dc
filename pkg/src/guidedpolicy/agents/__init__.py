from .dqn import QNetwork, dqn_select, dqn_update, greedy, td_targets
from .ppo import (PolicyValue, Trajectory, gae, imitation_warmup, policy_surrogate_grad,
                  ppo_update, supervised_step, training_accuracy)
from .replay import ReplayBuffer, WarmupSchedule
from .train import (ALGOS, REWARD_SOURCES, AgentConfig, ConfigurationError, GreedyPolicy,
                    GreedyQPolicy, RandomPolicy, TrainResult, corpus_rewards, curve_to_csv,
                    train_agent, wdqn_seed)
