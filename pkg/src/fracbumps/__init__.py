"""Pseudospectral solver suite for ring multi-bump solutions of
(-Lap)^s u + u = K(|x|) u^p on R^N.

Core layers: `grids` (spectral substrate), `groundstate` (the radial limit
profile), `rings` (bump configurations and symmetry), `energy` (functional
and expansion constants), `reduction` (correction solve, reduced maximizer,
Newton refinement).  `pipeline` orchestrates the stages behind the HTTP
service in `service` and the thin-client CLI in `cli`.
"""

__version__ = "0.1.0"
