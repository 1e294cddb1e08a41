"""Exception types shared across the package."""


class LaglabError(Exception):
    """Base class for all package errors."""


class ConfigError(LaglabError):
    """Invalid or inconsistent experiment configuration."""


class OutOfBoundsAction(LaglabError):
    """Discrete action index outside the action set."""


class NonFiniteAction(LaglabError):
    """Continuous action containing NaN or inf."""


class NonFiniteOutput(LaglabError):
    """Network forward pass produced NaN or inf."""


class NonFiniteGradient(LaglabError):
    """Backward pass produced NaN or inf."""


class NonFiniteRatio(LaglabError):
    """Importance ratio is NaN or inf before clamping."""


class NonFiniteLoss(LaglabError):
    """Loss evaluated to NaN or inf; the iteration is aborted."""


class EmptyBatch(LaglabError):
    """Operation requires at least one sample."""


class EmptyBuffer(LaglabError):
    """Policy buffer has no snapshots to assign."""


class PreconditionViolated(LaglabError):
    """Caller violated a documented precondition (e.g. rho_bar < c_bar)."""


class SingularSystem(LaglabError):
    """Linear solve failed; cannot happen for gamma < 1 but guarded anyway."""
