import json

import logbook as logging

TRAINING_CHANNEL = 'Training log'
CONSOLE_FORMAT = '[{record.time:%H:%M:%S}] {record.level_name}: {record.channel}: {record.message}'


class JsonLinesHandler(logging.Handler):
    """Writes the ``extra`` payload of training log records as one JSON object per line."""

    def __init__(self, path, *args, **kwargs):

        kwargs.setdefault('filter', lambda r, h: r.channel == TRAINING_CHANNEL)
        kwargs.setdefault('bubble', False)

        super(JsonLinesHandler, self).__init__(*args, **kwargs)

        self.path = path
        self.stream = open(path, 'a')

    def emit(self, record):

        self.stream.write(json.dumps(dict(record.extra), sort_keys=True) + '\n')
        self.stream.flush()

    def close(self):

        self.stream.close()


class ConsoleHandler(logging.StderrHandler):

    def __init__(self, *args, **kwargs):

        kwargs.setdefault('format_string', CONSOLE_FORMAT)
        super(ConsoleHandler, self).__init__(*args, **kwargs)


def read_log(path):

    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
