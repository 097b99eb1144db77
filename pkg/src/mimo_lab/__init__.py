"""Link-level laboratory for coded MIMO receivers.

Linear zero-forcing, iterative soft detection/decoding, an exact joint-APP
oracle and a trained deep-network receiver, compared by Monte-Carlo BER.
"""

__version__ = "0.1.0"
