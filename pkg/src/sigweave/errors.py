"""Exception hierarchy shared across the pipeline stages."""


class SigweaveError(Exception):
    """Base class for all engine errors."""


class MissingMandatoryField(SigweaveError):
    def __init__(self, field: str):
        self.field = field
        super().__init__(f"missing mandatory field: {field}")


class UnparsableTimestamp(SigweaveError):
    pass


class UnknownSeverityToken(SigweaveError):
    def __init__(self, token: str):
        self.token = token
        super().__init__(f"severity token not in translation table: {token!r}")


class UnknownType(SigweaveError):
    pass


class DanglingEdge(SigweaveError):
    pass


class UnknownNode(SigweaveError):
    pass


class InvalidPath(SigweaveError):
    pass


class EmptyInput(SigweaveError):
    pass


class EmptyCorpus(SigweaveError):
    pass


class KTooLarge(SigweaveError):
    pass


class SingleCluster(SigweaveError):
    pass


class ConflictingRules(SigweaveError):
    pass


class NoResolvedEntities(SigweaveError):
    pass


class UnknownGroup(SigweaveError):
    pass


class InvalidKnobs(SigweaveError):
    pass


class UniverseMismatch(SigweaveError):
    pass
