"""Physically realisable adversarial reflector layouts against SAR target classifiers.

Submodules: ``geometry``, ``scattering``, ``imaging``, ``attack``,
``optimize``, ``data``, ``bbox``, ``classify``, ``experiment`` and ``cli``.
"""

__version__ = "0.1.0"
