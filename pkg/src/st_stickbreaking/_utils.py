#  Copyright (C) 2026 st-stickbreaking developers
#
#  This program is free software; you can redistribute it and/or
#  modify it under the terms of the GNU Lesser General Public
#  License as published by the Free Software Foundation; either
#  version 2 of the License, or (at your option) any later version.
#
#  This library is distributed in the hope that it will be useful,
#  but WITHOUT ANY WARRANTY; without even the implied warranty of
#  MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the GNU
#  Lesser General Public License for more details.
#
#  You should have received a copy of the GNU Lesser General Public
#  License along with this library. If not, see <http://www.gnu.org/licenses/>.

"""
File and activity helpers shared by the command line and the writers.
"""

from contextlib import contextmanager
import hashlib
import logging
import os
import tempfile
import time

LOGGER = logging.getLogger(__name__)

_BUFFER_SIZE = 65536


# save_file_atomic()
#
# Save a file atomically. The file is written to a temporary file in
# the same directory and renamed over the target once the block exits
# successfully; on error the temporary file is removed and the target
# is left untouched.
#
# Args:
#    filename (str): The target file
#    mode (str): The open mode, "w" or "wb"
#
# Yields:
#    (file object) The temporary file to write to
#
@contextmanager
def save_file_atomic(filename, mode="w", *, encoding="utf-8", newline=None):
    dirname = os.path.dirname(os.path.abspath(filename))
    fd, tempname = tempfile.mkstemp(
        dir=dirname, prefix=".{}-".format(os.path.basename(filename))
    )
    os.close(fd)
    kwargs = {} if "b" in mode else {"encoding": encoding, "newline": newline}
    try:
        with open(tempname, mode, **kwargs) as f:
            yield f
            f.flush()
            os.fsync(f.fileno())
        os.replace(tempname, filename)
    except BaseException:
        try:
            os.unlink(tempname)
        except FileNotFoundError:
            pass
        raise


# sha256sum()
#
# Calculate the sha256sum of a file.
#
# Args:
#    filename (str): A path to a file on disk
#
# Returns:
#    (str) A sha256sum hex string
#
def sha256sum(filename):
    h = hashlib.sha256()
    with open(filename, "rb") as f:
        for chunk in iter(lambda: f.read(_BUFFER_SIZE), b""):
            h.update(chunk)
    return h.hexdigest()


def _format_elapsed(seconds):
    minutes, seconds = divmod(int(round(seconds)), 60)
    hours, minutes = divmod(minutes, 60)
    return "{:02d}:{:02d}:{:02d}".format(hours, minutes, seconds)


# timed_activity()
#
# Context manager logging the start, success or failure and the
# elapsed time of a long running activity. Errors propagate untouched.
#
# Args:
#    activity_name (str): The name of the activity
#    detail (str): Optional detail logged with the start message
#    logger (logging.Logger): The logger to use, defaults to this module's
#
@contextmanager
def timed_activity(activity_name, *, detail=None, logger=None):
    logger = logger or LOGGER
    if detail:
        logger.info("START %s: %s", activity_name, detail)
    else:
        logger.info("START %s", activity_name)
    start = time.monotonic()
    try:
        yield
    except BaseException:
        logger.error(
            "FAILURE %s [%s]",
            activity_name,
            _format_elapsed(time.monotonic() - start),
        )
        raise
    logger.info(
        "SUCCESS %s [%s]",
        activity_name,
        _format_elapsed(time.monotonic() - start),
    )
