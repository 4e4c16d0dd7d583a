"""LEAP+-style symmetric key management for wireless sensor networks.

The package is a protocol library plus a deterministic discrete-event
simulator: nodes establish individual, pairwise, cluster and global keys,
erase their bootstrap material after a fixed window, and a base station
audits per-node sequence numbers to detect and revoke injected or cloned
nodes.
"""

__version__ = "0.1.0"
