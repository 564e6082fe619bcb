import pytest

from p2pscaling.records import Direction, PacketRecord, Transport

LOCAL = "10.0.0.1"


def make_record(t=0.0, size=1200, direction="Download", transport="UDP", remote="192.0.2.7",
                lport=5000, rport=8000, payload=None):
    transport = Transport(transport)
    direction = Direction(direction)
    hdr = 40 if transport is Transport.TCP else 28
    if payload is None:
        payload = max(size - hdr, 0)
    if direction is Direction.UPLOAD:
        ends = (LOCAL, lport, remote, rport)
    else:
        ends = (remote, rport, LOCAL, lport)
    return PacketRecord(t, ends[0], ends[1], ends[2], ends[3], transport, size, payload, direction)


@pytest.fixture
def rec():
    return make_record
