"""Desk-scale multi-output HAT transducer with text-injection training.

Subpackages and modules:

* ``numerics``  float64 tensors + reverse-mode gradient tape
* ``lattice``   transducer lattice kernel (Cython or pure Python)
* ``labelkit``  vocab, tokenization, parallel label factorization
* ``model``     encoder, prediction network, three joint heads
* ``loss``      lattice losses, internal-LM losses, joint objective
* ``decode``    greedy frame-synchronous decoding
* ``metrics``   WER, uppercase error rate, eos precision/recall
* ``data``      synthetic corpus generation and loading
* ``train``     optimization loop and experiment runner
* ``cli``       ``multihat`` command-line entry point
"""

__version__ = "0.1.0"
