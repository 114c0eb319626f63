"""Exception types shared across the engine."""


class R2ragError(Exception):
    """Base class for engine errors."""


class ProviderError(R2ragError):
    """A provider call failed."""


class EndpointUnreachableError(ProviderError):
    """The provider endpoint could not be reached, even after retries."""


class ProviderTimeoutError(ProviderError):
    """A provider call exceeded its per-call deadline."""


class MalformedResponseError(ProviderError):
    """The provider answered with a body the client cannot interpret."""


class AllSearchesFailedError(R2ragError):
    """Every variant search in a fan-out failed; the stage cannot proceed."""


class MalformedVerdictError(R2ragError):
    """Review output carried no <is-sufficient> tag."""

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class DeadlineExceededError(R2ragError):
    """The per-request deadline expired mid-pipeline."""


class ScenarioError(R2ragError):
    """A scenario file is invalid or a scripted expectation was violated."""
