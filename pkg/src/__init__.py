"""SwiptMDP - rate-power regions of SWIPT links with a memory-bearing harvester."""
