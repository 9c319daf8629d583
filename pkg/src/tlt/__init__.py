"""Touch-less trust: verify an IoT device's identity, firmware and
configuration state over a constrained radio channel before interacting
with it.

Subpackages by role: crypto (primitives), documents (canonical artefacts
and chain verification), device (simulated IoT device), store (trust
records and persistence), netstore (line-protocol access), transport
(radio-style framing), verifier (user-side flow), threats (scenario
harness), cli (actor tooling).
"""

__version__ = "0.1.0"
