"""Validation state, grouping, reward and the policy-driven training loop."""

from .grouping import GroupedState, Grouping, aggregate_state, group_permutations, kmeans
from .ks import group_count_diagnostic, ks_two_sample
from .reward import ErrorHistory, baseline_error, compute_reward
from .runner import CurriculumRunner, CurriculumSettings, EpisodeRecord, PolicySettings, run_episode
from .state import NetworkStateMatrix, ValidationResult, softmax_ratios, validate
from .synthetic import SyntheticLearner
