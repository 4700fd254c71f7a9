"""Single-mode continuous-variable toolkit: Fock-basis states, Gaussian maps
on characteristic functions, and swarm optimization of conversion fidelity."""

__version__ = "0.1.0"
