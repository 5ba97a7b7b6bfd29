"""Temporally weighted training errors and their short-term memory bias.

The package is split by concern:

- ``kernels``: memory kernels and the ground-truth linear functionals they induce
- ``losses``: the polynomial weight family, its bias curve and weighted errors
- ``bias_oracle``: Monte-Carlo check of the bias curve
- ``models``: linear/tanh RNNs and causal TCNs with hand-written backward passes
- ``memory_probe``: step-response memory extraction
- ``tasks``, ``optim``, ``training``: data, optimizers and training loops
- ``cli``: the ``memory-bias`` command line tool

Submodules are imported explicitly; this file stays free of numpy so that
thread-count environment overrides can be applied before numpy loads.
"""

__version__ = "0.1.0"
