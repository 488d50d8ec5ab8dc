from .actions import ActionCatalog, action_key, build_action_catalog, make_composite
from .env import (FAILURE, ONGOING, SUCCESS, DialogueEnv, EnvConfig, EpisodeLog, ExpertPolicy,
                  HandcraftedReward, Observation, Turn, catalog_from_episodes, evaluate,
                  expert_policy, generate_expert_episodes, handcrafted_reward, reindex, run_episode)
from .schema import (ACT_TYPES, DomainSchema, SchemaError, desk_schemas, load_schemas,
                     paper_shape_schemas, save_schemas, slot_vocabulary)
from .tracker import StateLayout, TrackerState, initial_state, track_state, vectorize_state
from .user import AgendaUser, UserGoal, sample_goal
