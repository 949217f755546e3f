"""Parser for the model string of the command line.

Grammar::

    depvar [focal ...] [(controls ...)] [(endog ... = instruments ...)]

Bare names after the dependent variable are unpenalized regressors of
interest. A parenthesized group without ``=`` lists penalized controls; a
group with ``=`` lists endogenous variables on the left and excluded
instruments on the right. Names may be globs (``c*``) or header ranges
(``c1-c50``).
"""

import re
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from typing import List, Optional, Sequence, Tuple

from hdselect.dataset import DatasetError, ModelOptions, ModelSpec
from hdselect.errors import HDSError
from hdselect.logging_setup import get_logger

logger = get_logger()

_TOKEN = re.compile(r"\(|\)|=|[^\s()=]+")
_GLOB_CHARS = set("*?[")


class ModelSyntaxError(HDSError):
    """Raised when a model string cannot be parsed or resolved against the header."""

    module = "model_parser"


@dataclass
class ParseOptions:
    """Command-line options that assign or modify variable roles."""

    pnotpen: Sequence[str] = ()
    aset: Sequence[str] = ()
    partial: Sequence[str] = ()
    robust: bool = False
    cluster: Optional[str] = None
    fe: bool = False
    seed: int = 0


@dataclass
class _Group:
    names: List[str] = field(default_factory=list)
    instruments: Optional[List[str]] = None


def tokenize(model: str) -> List[str]:
    """Split a model string into names, parentheses and ``=``."""
    return _TOKEN.findall(model)


def expand_token(token: str, header: Sequence[str]) -> List[str]:
    """Resolve one name, glob or range against the header.

    A token that is itself a header name is taken literally. Globs match in
    header order. ``a-b`` selects the header columns from a to b inclusive.

    Raises:
        ModelSyntaxError: If nothing in the header matches
    """
    if token in header:
        return [token]
    if _GLOB_CHARS & set(token):
        matches = [name for name in header if fnmatchcase(name, token)]
        if not matches:
            raise ModelSyntaxError(f"Pattern '{token}' matches no column in the data")
        return matches
    if "-" in token:
        start, _, end = token.partition("-")
        missing = [point for point in (start, end) if point not in header]
        if missing:
            raise ModelSyntaxError(
                f"Range '{token}': endpoint(s) {missing} not found in the data"
            )
        i, j = list(header).index(start), list(header).index(end)
        if i > j:
            raise ModelSyntaxError(f"Range '{token}' runs backwards in column order")
        return list(header[i : j + 1])
    raise ModelSyntaxError(f"Variable '{token}' not found in the data")


def expand_names(tokens: Sequence[str], header: Sequence[str]) -> List[str]:
    """Expand several tokens, keeping first occurrences in order."""
    names: List[str] = []
    for token in tokens:
        names.extend(expand_token(token, header))
    return list(dict.fromkeys(names))


def _split_groups(tokens: Sequence[str]) -> Tuple[List[str], List[_Group]]:
    bare: List[str] = []
    groups: List[_Group] = []
    current: Optional[_Group] = None
    for token in tokens:
        if token == "(":
            if current is not None:
                raise ModelSyntaxError("Nested parentheses are not allowed")
            current = _Group()
        elif token == ")":
            if current is None:
                raise ModelSyntaxError("Unmatched ')'")
            if current.instruments is not None and not current.names:
                raise ModelSyntaxError("Instrument group has no endogenous variable before '='")
            if current.instruments is None and not current.names:
                raise ModelSyntaxError("Empty parenthesized group")
            groups.append(current)
            current = None
        elif token == "=":
            if current is None:
                raise ModelSyntaxError("'=' is only allowed inside parentheses")
            if current.instruments is not None:
                raise ModelSyntaxError("A group may contain only one '='")
            current.instruments = []
        elif current is None:
            bare.append(token)
        elif current.instruments is not None:
            current.instruments.append(token)
        else:
            current.names.append(token)
    if current is not None:
        raise ModelSyntaxError("Unclosed '('")
    return bare, groups


def parse_model(
    model: str, header: Sequence[str], options: Optional[ParseOptions] = None
) -> ModelSpec:
    """Parse a model string into a validated ModelSpec.

    ``pnotpen`` names found among the penalized controls or instruments are
    moved to the unpenalized roles; other ``pnotpen`` names join the model as
    unpenalized controls. ``partial`` names leave whatever group they were in
    and are partialled out. ``aset`` names must not appear elsewhere.

    Args:
        model: Model string
        header: Column names of the data, in file order
        options: Role-modifying options

    Returns:
        ModelSpec

    Raises:
        ModelSyntaxError: On grammar errors, unknown names or overlapping roles
    """
    options = options or ParseOptions()
    header = list(header)
    bare, groups = _split_groups(tokenize(model))
    if not bare:
        raise ModelSyntaxError("Model has no dependent variable")
    dependent_names = expand_token(bare[0], header)
    if len(dependent_names) != 1:
        raise ModelSyntaxError(f"Dependent variable '{bare[0]}' expands to several columns")
    dependent = dependent_names[0]

    focal = expand_names(bare[1:], header)
    control_groups = [g for g in groups if g.instruments is None]
    iv_groups = [g for g in groups if g.instruments is not None]
    if len(control_groups) > 1:
        raise ModelSyntaxError("Only one group of penalized controls is allowed")
    if len(iv_groups) > 1:
        raise ModelSyntaxError("Only one '(endogenous = instruments)' group is allowed")
    controls = expand_names(control_groups[0].names, header) if control_groups else []
    endogenous = expand_names(iv_groups[0].names, header) if iv_groups else []
    instruments = expand_names(iv_groups[0].instruments or [], header) if iv_groups else []
    if iv_groups and not instruments:
        raise ModelSyntaxError(f"Endogenous variables {endogenous} have no instruments")

    pnotpen = expand_names(options.pnotpen, header)
    partial = expand_names(options.partial, header)
    aset = expand_names(options.aset, header)

    partial_set = set(partial)
    focal = [v for v in focal if v not in partial_set]
    controls = [v for v in controls if v not in partial_set]
    pnotpen = [v for v in pnotpen if v not in partial_set]

    pnotpen_set = set(pnotpen)
    instruments_unpenalized = [v for v in instruments if v in pnotpen_set]
    instruments_penalized = [v for v in instruments if v not in pnotpen_set]
    controls_penalized = [v for v in controls if v not in pnotpen_set]
    instrument_set = set(instruments)
    controls_unpenalized = [v for v in pnotpen if v not in instrument_set]
    extra = [v for v in controls_unpenalized if v not in set(controls)]
    if extra:
        logger.info(f"Unpenalized controls added by pnotpen: {extra}")

    treatments = list(dict.fromkeys(focal + endogenous))
    spec = ModelSpec(
        dependent=dependent,
        treatments=treatments,
        focal_unpenalized=focal,
        hd_controls_penalized=controls_penalized,
        endogenous=endogenous,
        instruments_penalized=instruments_penalized,
        instruments_unpenalized=instruments_unpenalized,
        amelioration_set=aset,
        partial_out=partial,
        controls_unpenalized=controls_unpenalized,
        options=ModelOptions(
            robust=options.robust,
            cluster=options.cluster,
            fe=options.fe,
            seed=options.seed,
        ),
    )
    if options.cluster is not None and options.cluster not in header:
        raise ModelSyntaxError(f"Cluster variable '{options.cluster}' not found in the data")
    if len(treatments) != len(focal) + len(endogenous):
        overlap = sorted(set(focal) & set(endogenous))
        raise ModelSyntaxError(f"Variables both focal and endogenous: {overlap}")
    try:
        spec.validate()
    except DatasetError as e:
        raise ModelSyntaxError(str(e)) from e
    logger.debug(
        f"Parsed model: y={dependent}, {len(treatments)} treatments, "
        f"{len(controls_penalized)} penalized controls, {len(instruments)} instruments"
    )
    return spec
