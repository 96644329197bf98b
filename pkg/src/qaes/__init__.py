"""AES with quantum-keyed dynamic S-boxes (QAES), BB84 key generation and a
two-party negotiation harness."""

from .aes_core import CipherParams, RoundKeySet, decrypt_block, encrypt_block, expand_key, params_for_key_len
from .dqsbox import DqsBox, box_diagnostics, correlation_profile, generate_box
from .errors import KeyDepletionError, QaesError
from .modes import decrypt_message, encrypt_message, offline_init, online_init
from .qkd_bb84 import Bb84Config, QuantumKeyStream, run_session

__version__ = "0.1.0"
