"""Single-task REINFORCE with a learned state-value baseline and Pop-Art.

Used for the high-level policy over latent options and for the flat baseline
acting on primitive actions.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

import numpy as np

from ..embeddings.latents import EmbeddingMode, TaskLatents
from ..envs.base import Environment
from ..envs.trajectory import Trajectory
from ..errors import ConfigurationError, DivergenceError
from ..numeric import autodiff as ad
from ..numeric.autodiff import ParamVector, Tape
from ..numeric.mlp import Activation, MlpSpec, init_params, mlp_eval, mlp_forward
from ..numeric.optim import OptimizerState, optimizer_step
from ..policy import LatentPolicy, PolicyInput
from ..rollout import EpisodeJob, collect_episodes
from ..seeding import SeedSequencer
from .algorithm import StepBatch, discounted_returns, score_surrogate
from .popart import PopArtState, popart_normalize

logger = logging.getLogger(__name__)

TASK = (0, 0)


@dataclass
class EpisodicReinforceConfig:
    """Hyperparameters of the single-task learner.

    Attributes:
        gamma: Discount factor.
        alpha_pi: Entropy temperature; ``inf`` leaves plain rewards.
        episodes_per_batch: Episodes per update, one environment instance each.
        learning_rate: Policy step size.
        value_learning_rate: Value network step size.
        pop_art_beta: Step size of the return moments.
    """

    gamma: float = 0.99
    alpha_pi: float = 50.0
    episodes_per_batch: int = 10
    learning_rate: float = 0.002
    value_learning_rate: float = 0.002
    pop_art_beta: float = 0.02
    hidden_width: int = 32
    hidden_layers: int = 1
    activation: Activation = Activation.TANH

    def __post_init__(self):
        if self.episodes_per_batch < 1:
            raise ConfigurationError(f"episodes_per_batch must be at least 1, got {self.episodes_per_batch}")
        if not self.alpha_pi > 0.0:
            raise ConfigurationError(f"alpha_pi must be positive or inf, got {self.alpha_pi}")


class EpisodicReinforce:
    """A latent-free policy and value network trained on whole episodes of one environment."""

    def __init__(self, cfg: EpisodicReinforceConfig, envs: Sequence[Environment], seeds: SeedSequencer,
                 stream: str = "episodic") -> None:
        """Initialize EpisodicReinforce.

        Args:
            cfg: Hyperparameters.
            envs: Exactly ``episodes_per_batch`` instances of one environment.
            seeds: Seed source.
            stream: Name prefixing this learner's random streams.

        Raises:
            ConfigurationError: If the environment count does not match the batch size.
        """
        if len(envs) != cfg.episodes_per_batch:
            raise ConfigurationError(f"need {cfg.episodes_per_batch} environment instances, got {len(envs)}")
        self.config = cfg
        self.envs = list(envs)
        self.seeds = seeds
        self.stream = stream
        env = self.envs[0]
        rng = seeds.rng(stream, "init")
        self.latents = TaskLatents.create(EmbeddingMode.NONE, (1, 1), 0, 0, rng)
        self.policy = LatentPolicy.build(env.observation_dim, 0, env.action_dim, env.n_actions or 0,
                                         cfg.hidden_width, cfg.hidden_layers, cfg.activation, PolicyInput.CONCAT, rng)
        self.value_spec = MlpSpec.uniform(env.observation_dim, cfg.hidden_width, cfg.hidden_layers,
                                          cfg.activation, 1)
        self.value_params: ParamVector = init_params(self.value_spec, rng, "value")
        self.popart = PopArtState(beta=cfg.pop_art_beta)
        self.policy_optimizer = OptimizerState()
        self.value_optimizer = OptimizerState()
        self.episodes = 0

    def values(self, states: np.ndarray) -> np.ndarray:
        """Baseline values of ``states``, off the tape."""
        return mlp_eval(self.value_spec, self.value_params, states)[:, 0]

    def train_batch(self) -> List[Trajectory]:
        """Collects one batch of episodes and takes one policy step and one value step.

        Returns:
            The collected trajectories.

        Raises:
            DivergenceError: If either loss is not finite.
        """
        cfg = self.config
        jobs = [EpisodeJob(TASK, env, self.seeds.rng(self.stream, self.episodes + m))
                for m, env in enumerate(self.envs)]
        trajectories = collect_episodes(self.policy, self.latents, jobs)
        self.episodes += len(jobs)

        raw = []
        for traj in trajectories:
            rewards = np.asarray(traj.rewards, dtype=np.float64)
            if not math.isinf(cfg.alpha_pi):
                log_probs = self.policy.log_prob_value(np.array(traj.states), np.zeros((len(traj), 0)),
                                                       np.array(traj.actions))
                rewards = rewards - log_probs / cfg.alpha_pi
            raw.append(discounted_returns(rewards, cfg.gamma))
        targets = popart_normalize(self.popart, np.concatenate(raw), TASK)
        states = np.concatenate([np.array(traj.states) for traj in trajectories])
        actions = np.concatenate([np.array(traj.actions) for traj in trajectories])
        count = len(targets)

        value_tape = Tape(trainable=[self.value_params])
        predicted = mlp_forward(self.value_spec, self.value_params, states, value_tape)[:, 0]
        error = predicted - targets
        value_loss = ad.mean(error * error)
        advantages = targets - predicted.value
        value_tape.backward(value_loss)

        batch = StepBatch(np.zeros(count, dtype=np.int64), np.zeros(count, dtype=np.int64), states, actions,
                          np.zeros((count, 0)), np.zeros((count, 0)), advantages / len(trajectories))
        policy_tape = Tape(trainable=[self.policy.params])
        policy_loss = score_surrogate(policy_tape, self.policy, self.latents, batch)
        if not (np.isfinite(policy_loss.item()) and np.isfinite(value_loss.item())):
            raise DivergenceError(f"non-finite loss after {self.episodes} episodes")
        policy_tape.backward(policy_loss)
        optimizer_step(self.value_params, cfg.value_learning_rate, self.value_optimizer)
        optimizer_step(self.policy.params, cfg.learning_rate, self.policy_optimizer)
        logger.debug("episodic reinforce: %d episodes, mean return %.4f", self.episodes,
                     float(np.mean([traj.total_reward for traj in trajectories])))
        return trajectories

    def to_dict(self) -> Dict[str, Any]:
        return {
            "episodes": self.episodes,
            "policy": self.policy.to_dict(),
            "value": self.value_params.values.copy(),
            "popart": self.popart.to_dict(),
            "policy_optimizer": self.policy_optimizer.to_dict(),
            "value_optimizer": self.value_optimizer.to_dict(),
        }

    def load_dict(self, data: Dict[str, Any]) -> None:
        self.episodes = int(data["episodes"])
        self.policy.load_dict(data["policy"])
        self.value_params.assign(data["value"])
        self.popart = PopArtState.from_dict(data["popart"])
        self.policy_optimizer = OptimizerState.from_dict(data["policy_optimizer"])
        self.value_optimizer = OptimizerState.from_dict(data["value_optimizer"])
