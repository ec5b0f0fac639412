"""Bundled English stopword list.

The list is fixed so that preprocessing is reproducible across machines.
It covers the usual function words plus the apostrophe-stripped negation
forms produced by the tokenizer ("don't" -> "dont").  Callers can replace
it with their own set loaded from a file.
"""

from __future__ import annotations

STOPWORDS: frozenset[str] = frozenset("""
a about above after again against all am an and any are arent as at be
because been before being below between both but by cant cannot could
couldnt did didnt do does doesnt doing dont down during each few for from
further had hadnt has hasnt have havent having he hed hell hes her here
heres hers herself him himself his how hows i id ill im ive if in into is
isnt it its itself lets me more most mustnt my myself no nor not of off on
once only or other ought our ours ourselves out over own same shant she
shed shell shes should shouldnt so some such than that thats the their
theirs them themselves then there theres these they theyd theyll theyre
theyve this those through to too under until up very was wasnt we wed well
were werent weve what whats when whens where wheres which while who whos
whom why whys with wont would wouldnt you youd youll youre youve your
yours yourself yourselves
""".split())


def load_stopwords(path: str) -> frozenset[str]:
    """Read a stopword set from a file with one word per line.

    Blank lines and lines starting with ``#`` are ignored.  Words are
    lowercased so the set matches tokenizer output.
    """
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip().lower()
            if word and not word.startswith("#"):
                words.add(word)
    return frozenset(words)
