"""Byte ledger of activations retained for the backward pass."""


class ActivationLedger:
    """Tracks named activation tensors kept alive for backpropagation.

    Only what an engine explicitly retains is counted, so the peak is a
    property of the backprop schedule rather than of the allocator.
    """

    def __init__(self):
        self._live = {}
        self.current_bytes = 0
        self.peak_bytes = 0
        self.peak_count = 0

    def retain(self, key, array):
        if key in self._live:
            raise KeyError(f"activation {key!r} already retained")
        self._live[key] = array.nbytes
        self.current_bytes += array.nbytes
        if self.current_bytes > self.peak_bytes:
            self.peak_bytes = self.current_bytes
        self.peak_count = max(self.peak_count, len(self._live))
        return array

    def release(self, key):
        self.current_bytes -= self._live.pop(key)

    def release_all(self):
        for key in list(self._live):
            self.release(key)

    def __contains__(self, key):
        return key in self._live

    def __len__(self):
        return len(self._live)
