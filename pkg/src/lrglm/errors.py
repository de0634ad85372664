class OracleLimitError(ValueError):
    """A dense oracle was asked to materialise a matrix beyond its size limit."""


class ConvergenceError(RuntimeError):
    """An inner optimisation or factorisation did not succeed."""


# dense D x D matrices are refused above this many columns
ORACLE_LIMIT = 2000


def check_oracle(dim, limit=None, what="dense oracle"):
    limit = ORACLE_LIMIT if limit is None else limit
    if dim > limit:
        raise OracleLimitError(f"{what} needs a {dim}x{dim} matrix; limit is {limit}")
