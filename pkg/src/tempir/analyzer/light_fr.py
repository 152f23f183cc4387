"""Light French stemmer in the style of Savoy's light stemmer.

Removes inflectional endings and a small set of derivational suffixes,
then normalises accents and doubled letters.  Much less aggressive than
Snowball; intended for indexing.
"""

_ACCENTS = str.maketrans({
    "à": "a", "á": "a", "â": "a",
    "ô": "o",
    "è": "e", "é": "e", "ê": "e",
    "ù": "u", "û": "u",
    "î": "i",
    "ç": "c",
})


def _norm(s: str) -> str:
    if len(s) > 4:
        s = s.translate(_ACCENTS)
        out = [s[0]]
        for ch in s[1:]:
            if ch == out[-1] and ch.isalpha():
                continue
            out.append(ch)
        s = "".join(out)
    if len(s) > 4 and s.endswith("ie"):
        s = s[:-2]
    if len(s) > 4:
        if s[-1] == "r":
            s = s[:-1]
        if s[-1] == "e":
            s = s[:-1]
        if s[-1] == "e":
            s = s[:-1]
        if s[-1] == s[-2] and s[-1].isalpha():
            s = s[:-1]
    return s


def stem(s: str) -> str:
    n = len(s)
    if n > 5 and s[-1] == "x":
        if s[-3] == "a" and s[-2] == "u" and s[-4] != "e":
            s = s[:-2] + "l"
        else:
            s = s[:-1]
    if len(s) > 3 and s[-1] == "x":
        s = s[:-1]
    if len(s) > 3 and s[-1] == "s":
        s = s[:-1]

    n = len(s)
    if n > 9 and s.endswith("issement"):
        return _norm(s[:-6][:-1] + "r")
    if n > 8 and s.endswith("issant"):
        return _norm(s[:-4][:-1] + "r")
    if n > 6 and s.endswith("ement"):
        s = s[:-4]
        if len(s) > 3 and s.endswith("ive"):
            s = s[:-2] + "f"
        return _norm(s)
    if n > 11 and s.endswith("ficatrice"):
        return _norm(s[:-5][:-2] + "er")
    if n > 10 and s.endswith("ficateur"):
        return _norm(s[:-4][:-2] + "er")
    if n > 9 and s.endswith("catrice"):
        return _norm(s[:-7] + "quer")
    if n > 8 and s.endswith("cateur"):
        return _norm(s[:-6] + "quer")
    if n > 8 and s.endswith("atrice"):
        return _norm(s[:-4][:-2] + "er")
    if n > 7 and s.endswith("ateur"):
        return _norm(s[:-3][:-2] + "er")
    if n > 6 and s.endswith("trice"):
        s = s[:-5] + "teur"
    n = len(s)
    if n > 5 and s.endswith("ième"):
        return _norm(s[:-4])
    if n > 7 and s.endswith("teuse"):
        return _norm(s[:-2][:-1] + "r")
    if n > 6 and s.endswith("teur"):
        return _norm(s[:-1][:-1] + "r")
    if n > 5 and s.endswith("euse"):
        return _norm(s[:-2])
    if n > 8 and s.endswith("ère"):
        return _norm(s[:-3] + "er")
    if n > 7 and s.endswith("ive"):
        return _norm(s[:-2] + "f")
    if n > 4 and (s.endswith("folle") or s.endswith("molle")):
        return _norm(s[:-3] + "u")
    if n > 9 and s.endswith("nnelle"):
        return _norm(s[:-5])
    if n > 9 and s.endswith("nnel"):
        return _norm(s[:-3])
    if n > 4 and s.endswith("ète"):
        s = s[:-3] + "et"
    n = len(s)
    if n > 8 and s.endswith("ique"):
        s = s[:-4]
    n = len(s)
    if n > 8 and s.endswith("esse"):
        return _norm(s[:-3])
    if n > 7 and s.endswith("inage"):
        return _norm(s[:-3])
    if n > 9 and s.endswith("isation"):
        s = s[:-7]
        if len(s) > 5 and s.endswith("ual"):
            s = s[:-2] + "el"
        return _norm(s)
    if n > 9 and s.endswith("isateur"):
        return _norm(s[:-7])
    if n > 8 and s.endswith("ation"):
        return _norm(s[:-5])
    if n > 8 and s.endswith("ition"):
        return _norm(s[:-5])
    return _norm(s)
