"""Exception hierarchy shared across the package.

Two failure families matter to callers: bad inputs (rejected up front) and
numerical domain violations discovered mid-computation. The CLI maps them to
exit codes 2 and 3 respectively.
"""


class ComsGarchError(Exception):
    """Base class for all package errors."""


class ValidationError(ComsGarchError):
    """Invalid user input: malformed data, broken invariants, bad config."""


class DomainError(ComsGarchError):
    """Numerical domain violation (non-positive variance, invalid probability).

    Carries optional context so callers can report where the computation broke.
    """

    def __init__(self, message, *, index=None, state=None, dt=None):
        super().__init__(message)
        self.index = index
        self.state = state
        self.dt = dt

    def __str__(self):
        base = super().__str__()
        ctx = []
        if self.index is not None:
            ctx.append(f"index={self.index}")
        if self.state is not None:
            ctx.append(f"state={self.state}")
        if self.dt is not None:
            ctx.append(f"dt={self.dt:g}")
        return f"{base} ({', '.join(ctx)})" if ctx else base
