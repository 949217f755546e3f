"""Exception base shared by all hdselect modules."""


class HDSError(Exception):
    """Base class for hdselect errors.

    Subclasses set ``module`` to the tag reported by the command line and
    ``numeric`` to True when the failure is numerical rather than caused by
    user input (the two map to different exit codes).
    """

    module = "hdselect"
    numeric = False

    def tagged(self) -> str:
        """Return the message prefixed with the module tag."""
        return f"[{self.module}] {self}"
