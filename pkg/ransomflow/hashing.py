"""
Content hashing of buffers and files.

Stage cache keys are built from hashes of the input files and of the options
that affect a stage. The fastest available algorithm is used; results are
only compared within one installation, so the algorithm may differ between
machines.
"""

from __future__ import absolute_import, division, print_function

import binascii
import hashlib


hashers = []  # In decreasing performance order

#: read block size used when hashing files
BLOCKSIZE = 1 << 20

try:
    import xxhash  # `pip install xxhash`
except ImportError:
    pass
else:
    def _new_xxhash():
        return xxhash.xxh64()

    hashers.append(_new_xxhash)


def _new_sha1():
    return hashlib.sha1()


hashers.append(_new_sha1)


def hash_buffer(buf, hasher=None):
    """
    Hash a bytes-like (buffer-compatible) object.  This function returns
    a good quality hash but is not cryptographically secure.  The fastest
    available algorithm is selected.  A fixed-length bytes object is returned.
    """
    new = hashers[0] if hasher is None else hasher
    h = new()
    h.update(buf)
    return h.digest()


def hash_buffer_hex(buf, hasher=None):
    """
    Same as hash_buffer, but returns its result in hex-encoded form.
    """
    h = hash_buffer(buf, hasher)
    return binascii.b2a_hex(h).decode()


def hash_files(*paths, extra = (), hasher=None):
    """
    Hash the contents of one or more files plus extra (hashable) options.

    Missing files (or `None` paths) contribute a fixed marker, so that a
    stage depending on an absent optional input still gets a stable key.

    Parameters
    ----------
    paths : str
        File names.
    extra : sequence, optional
        Additional values (options) that the result depends on. They are
        converted with `repr`.

    Returns
    -------
    key : str
        Hex-encoded hash.
    """
    new = hashers[0] if hasher is None else hasher
    h = new()
    for path in paths:
        if path is None:
            h.update(b"<none>")
            continue
        try:
            with open(path, "rb") as f:
                while True:
                    block = f.read(BLOCKSIZE)
                    if not block:
                        break
                    h.update(block)
        except FileNotFoundError:
            h.update(b"<missing>")
        h.update(b"\x00")
    for value in extra:
        h.update(repr(value).encode())
        h.update(b"\x00")
    return binascii.b2a_hex(h.digest()).decode()
