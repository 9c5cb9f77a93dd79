"""graphepi: metapopulation epidemic simulator with a GNN surrogate.

Subpackages cover the mechanistic compartment model (`epicore`), the mobility
graph and coupled simulation (`metapop`), scenario/dataset generation
(`scenarios`), a small reverse-mode autodiff engine (`autodiff`), surrogate
models and training (`surrogate`), evaluation and benchmarking (`evalbench`),
and the HTTP what-if service (`service`).
"""

__version__ = "0.1.0"
