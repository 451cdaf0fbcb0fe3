"""l2ai: an instrumented simulator for a lightweight three-factor
authentication and authorization protocol with a hash-chained credential
ledger and a scriptable adversarial channel."""

__version__ = "0.1.0"
