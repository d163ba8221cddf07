"""grasptune: fine-tune grasp priors with residual CEM and distill the result.

The pieces line up as a pipeline: a prior proposes grasp parameters for a
scene, the fine-tuning loop perturbs and refits around what scores well, and
the winning residuals are distilled into a conditional VAE policy. A
synthetic grasp environment and an operator-facing reward API stand in for
the robot and the human scorer.
"""

__version__ = "0.1.0"

from . import affordance, finetune, kinematics, policy, rotation, simenv

__all__ = ["affordance", "finetune", "kinematics", "policy", "rotation", "simenv", "__version__"]
