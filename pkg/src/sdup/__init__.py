"""Share-based confidentiality for ad hoc unipath routing.

Messages are split into Shamir shares over GF(256), encrypted, combined in
XOR pairs around a ring, shuffled under a session key and relayed along a
security-selected path of a simulated ad hoc network. Eavesdropper models
measure how often captured frames would let an attacker rebuild a message.
"""

from .errors import SdupError

__all__ = ["SdupError"]
__version__ = "0.1.0"
