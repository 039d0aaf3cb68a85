"""Python front end for the swarm oracle core."""

from ._core import (
    UNITS_PER_TOKEN,
    Contract,
    Error,
    consensus_error,
    expand_matrix,
    replay_chain,
    run,
)

__all__ = [
    "UNITS_PER_TOKEN",
    "Contract",
    "Error",
    "consensus_error",
    "expand_matrix",
    "replay_chain",
    "report",
    "run",
]


def report(robot, nonce, deposit, observation, vote="accept", target=None):
    """Build a report record in the wire format `Contract.apply_report` expects."""
    return {
        "v": 1,
        "robot": robot,
        "nonce": nonce,
        "deposit": deposit,
        "vote": vote,
        "obs": list(observation),
        "target": target,
    }
