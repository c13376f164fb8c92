import struct

import numpy as np
import pytest

from fastrpe.shared.codec import decode_header, decode_mat, encode_header, encode_mat, read_mat, write_mat
from fastrpe.shared.errors import CodecError
from fastrpe.shared.protocol import TATT_HEADER_SIZE


class TestHeader:
    def test_layout(self):
        head = encode_header(3, 5)
        assert len(head) == TATT_HEADER_SIZE
        assert head[:4] == b"TATT"
        assert head[4] == 1 and head[5] == 1
        assert struct.unpack("<QQ", head[8:]) == (3, 5)
        assert decode_header(head) == (3, 5)

    @pytest.mark.parametrize("offset,value", [(0, ord("X")), (4, 9), (5, 2)])
    def test_rejects_bad_fields(self, offset, value):
        head = bytearray(encode_header(2, 2))
        head[offset] = value
        with pytest.raises(CodecError):
            decode_header(bytes(head))

    def test_short_header(self):
        with pytest.raises(CodecError):
            decode_header(b"TATT")


class TestMatrices:
    def test_bytes_round_trip(self, rng):
        mat = rng.normal((4, 3))
        np.testing.assert_array_equal(decode_mat(encode_mat(mat)), mat)

    def test_truncated_payload(self, rng):
        blob = encode_mat(rng.normal((2, 2)))
        with pytest.raises(CodecError):
            decode_mat(blob[:-8])

    def test_rejects_vectors(self):
        with pytest.raises(CodecError):
            encode_mat(np.zeros(3))

    def test_file_round_trip(self, rng, tmp_path):
        # spans several write chunks
        mat = rng.normal((200, 100))
        size = write_mat(tmp_path / "m.tatt", mat)
        assert size == TATT_HEADER_SIZE + mat.size * 8
        np.testing.assert_array_equal(read_mat(tmp_path / "m.tatt"), mat)
