"""Loopback bridge: answers every denoise request with its own payload."""
import struct
import sys

from snapsci import scid


def main():
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    while True:
        raw = stdin.read(scid.HEADER.size)
        if not raw:
            return
        fields = scid.HEADER.unpack(raw)
        magic, version, msg, color, _res, nx, ny, channels, nb, sigma, count = fields
        payload = scid.read_exact(stdin.read, 4 * count)
        header = scid.HEADER.pack(magic, version, scid.MSG_OK, color, 0,
                                  nx, ny, channels, nb, sigma, count)
        stdout.write(header + payload)
        stdout.flush()


if __name__ == "__main__":
    main()
