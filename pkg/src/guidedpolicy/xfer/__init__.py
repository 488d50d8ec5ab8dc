from .embedding import FactoredVocab, UnknownActPart, embedding_matrix, factorize_action
from .experiment import (TransferConfig, TransferReport, TransferRewards, run_transfer_agents,
                         train_transfer_rewards, transfer_env, transfer_experiment)
from .holdout import HoldoutSpec, audit_corpus, filter_corpus, visible_actions
