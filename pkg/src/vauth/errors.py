"""Exception hierarchy shared by all modules."""


class VauthError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class InvalidName(VauthError, ValueError):
    pass


class InvalidPattern(VauthError, ValueError):
    pass


class AuthorityError(VauthError):
    """A secret key does not match the key it claims authority for."""


class RegistryError(VauthError):
    pass


class DischargeRefused(VauthError):
    def __init__(self, diagnostic: str) -> None:
        super().__init__(diagnostic)
        self.diagnostic = diagnostic


class OwnershipError(VauthError):
    """A blessing is bound to a key other than the store owner's."""


class VerificationError(VauthError):
    pass
