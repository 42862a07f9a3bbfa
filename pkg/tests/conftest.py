import pytest

from kgnav.corpus import Document
from kgnav.entities import MentionSpan
from kgnav.knowledge import KnowledgeBase


def spans_for(docs, labels):
    """Annotate every occurrence of each label (PERSON) in each document."""
    out = []
    for d in docs:
        for label in labels:
            start = d.text.find(label)
            while start != -1:
                out.append(MentionSpan(d.doc_id, start, start + len(label), label, "PERSON"))
                start = d.text.find(label, start + 1)
    return out


@pytest.fixture
def chain_kb():
    """A-B-C co-mention chain; the gold fact only sits in C's chunk."""
    docs = [
        Document("d1", "one", "Alpha met Beta at the old harbor near the lighthouse."),
        Document("d2", "two", "Beta later travelled with Gamma across the mountains."),
        Document("d3", "three", "Gamma buried the treasure beneath the oak tree."),
        Document("d4", "four", "nothing about anyone here, only weather and tides."),
    ]
    return KnowledgeBase.build(docs, spans=spans_for(docs, ["Alpha", "Beta", "Gamma"]))


def pytest_terminal_summary(terminalreporter):
    from acceptance import summary_lines

    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
