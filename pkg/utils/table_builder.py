from typing import List


class TableBuilder:
    """
    A standardized builder for aligned plain-text report tables.
    """
    def __init__(self, title: str = None, description: str = None):
        self._title = title
        self._description = description
        self._columns: List[tuple] = []
        self._rows: List[List[str]] = []
        self._footer = None

    def set_title(self, title: str):
        self._title = title
        return self

    def set_description(self, description: str):
        self._description = description
        return self

    def add_column(self, name: str, align: str = 'right'):
        if align not in ('left', 'right'):
            raise ValueError(f"align must be 'left' or 'right', got {align!r}")
        self._columns.append((name, align))
        return self

    def add_row(self, *values):
        if len(values) != len(self._columns):
            raise ValueError(f"row has {len(values)} cells, table has {len(self._columns)} columns")
        self._rows.append([str(v) for v in values])
        return self

    def set_footer(self, text: str):
        self._footer = text
        return self

    def build(self) -> str:
        widths = [len(name) for name, _ in self._columns]
        for row in self._rows:
            widths = [max(w, len(cell)) for w, cell in zip(widths, row)]

        def line(cells):
            out = []
            for cell, (_, align), width in zip(cells, self._columns, widths):
                out.append(cell.ljust(width) if align == 'left' else cell.rjust(width))
            return ' | '.join(out).rstrip()

        rule = '-+-'.join('-' * w for w in widths)
        lines = []
        if self._title:
            lines.append(self._title)
        if self._description:
            lines.append(self._description)
        lines.append(line([name for name, _ in self._columns]))
        lines.append(rule)
        lines.extend(line(row) for row in self._rows)
        if self._footer:
            lines.append(self._footer)
        return '\n'.join(lines) + '\n'
