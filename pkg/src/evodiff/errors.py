"""Exception types shared across the library."""


class ConfigError(ValueError):
    """Invalid configuration (bad schedule bounds, unknown keys, ...)."""


class SolverError(RuntimeError):
    """A numerical solver failed to converge."""


class TrainingError(RuntimeError):
    """Denoiser training diverged (non-finite loss)."""


class FitnessEvalError(RuntimeError):
    """A black-box fitness evaluation failed.

    Carries enough context to locate the failing call: the denoising step
    and the population sample index, when known.
    """

    def __init__(self, message, step=None, sample_index=None):
        self.step = step
        self.sample_index = sample_index
        parts = [message]
        if step is not None:
            parts.append(f"step={step}")
        if sample_index is not None:
            parts.append(f"sample={sample_index}")
        super().__init__(" ".join(parts))
