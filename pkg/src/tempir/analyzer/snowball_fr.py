"""French Snowball stemmer.

A direct port of the published Snowball algorithm for French, working on
plain Python strings.  Regions are tracked as integer offsets into the
word; backward-mode conditions are written as explicit suffix checks.
"""

VOWELS = frozenset("aeiouyâàëéêèïîôûù")
_KEEP_WITH_S = frozenset("aiouès")

_STEP1 = {
    # group a: delete if in R2
    **dict.fromkeys(
        ["ance", "iqUe", "isme", "able", "iste", "eux",
         "ances", "iqUes", "ismes", "ables", "istes"], "r2_delete"),
    **dict.fromkeys(
        ["atrice", "ateur", "ation", "atrices", "ateurs", "ations"], "atrice"),
    **dict.fromkeys(["logie", "logies"], "logie"),
    **dict.fromkeys(["usion", "ution", "usions", "utions"], "usion"),
    **dict.fromkeys(["ence", "ences"], "ence"),
    **dict.fromkeys(["ement", "ements"], "ement"),
    **dict.fromkeys(["ité", "ités"], "ite"),
    **dict.fromkeys(["if", "ive", "ifs", "ives"], "if"),
    "eaux": "eaux",
    "aux": "aux",
    **dict.fromkeys(["euse", "euses"], "euse"),
    **dict.fromkeys(["issement", "issements"], "issement"),
    "amment": "amment",
    "emment": "emment",
    **dict.fromkeys(["ment", "ments"], "ment"),
}

_STEP2A = frozenset([
    "îmes", "ît", "îtes", "i", "ie", "ies", "ir", "ira", "irai", "iraIent",
    "irais", "irait", "iras", "irent", "irez", "iriez", "irions", "irons",
    "iront", "is", "issaIent", "issais", "issait", "issant", "issante",
    "issantes", "issants", "isse", "issent", "isses", "issez", "issiez",
    "issions", "issons", "it",
])

_STEP2B_DELETE = frozenset([
    "é", "ée", "ées", "és", "èrent", "er", "era", "erai", "eraIent", "erais",
    "erait", "eras", "erez", "eriez", "erions", "erons", "eront", "ez", "iez",
])
_STEP2B_A = frozenset([
    "âmes", "ât", "âtes", "a", "ai", "aIent", "ais", "ait", "ant", "ante",
    "antes", "ants", "as", "asse", "assent", "asses", "assiez", "assions",
])
# -ais/-aise(s) survive after these stems (palais, mauvais, déplaise)
_AIS_FAMILY = frozenset(["ais", "aise", "aises"])


def _keeps_ais(stem: str) -> bool:
    return stem.endswith(("auv", "épl")) or (stem.endswith("al") and len(stem) == 3)


# -oux loses the x after these letters (bijoux, genoux, choux)
_OUX_DROP_X_AFTER = frozenset("bhjlnp")
_STEP2B = _STEP2B_DELETE | _STEP2B_A | {"ions", "aise", "aises"}

_STEP4 = {"ion": "ion", "ier": "ier", "ière": "ier", "Ier": "ier", "Ière": "ier", "e": "e"}


def _is_vowel(ch: str) -> bool:
    return ch in VOWELS


def _longest_suffix(word: str, suffixes, start: int = 0) -> str | None:
    """Longest member of ``suffixes`` ending ``word`` and starting at or after ``start``."""
    best = None
    for suf in suffixes:
        if word.endswith(suf) and len(word) - len(suf) >= start:
            if best is None or len(suf) > len(best):
                best = suf
    return best


def _prelude(word: str) -> str:
    """Mark consonantal u/i/y in upper case and split diaereses into H+vowel.

    Mirrors a left-to-right ``repeat goto`` scan: after each rewrite the
    scan resumes at the position where the pattern matched.
    """
    s = list(word)
    i = 0
    while True:
        p = i
        moved = False
        while p < len(s) and not moved:
            nxt = s[p + 1] if p + 1 < len(s) else ""
            nxt2 = s[p + 2] if p + 2 < len(s) else ""
            if _is_vowel(s[p]) and nxt in ("u", "i") and nxt2 and _is_vowel(nxt2):
                s[p + 1] = nxt.upper()
                i, moved = p, True
            elif _is_vowel(s[p]) and nxt == "y":
                s[p + 1] = "Y"
                i, moved = p, True
            elif s[p] in ("ë", "ï"):
                s[p:p + 1] = ["H", "e" if s[p] == "ë" else "i"]
                i, moved = p, True
            elif s[p] == "y" and nxt and _is_vowel(nxt):
                s[p] = "Y"
                i, moved = p, True
            elif s[p] == "q" and nxt == "u":
                s[p + 1] = "U"
                i, moved = p, True
            else:
                p += 1
        if not moved:
            return "".join(s)


def _regions(word: str) -> tuple[int, int, int]:
    n = len(word)
    # RV
    if n >= 2 and _is_vowel(word[0]) and _is_vowel(word[1]):
        rv = min(3, n)
    elif word[:3] in ("par", "col", "tap") or (word[:2] == "ni" and n > 2 and _is_vowel(word[2])):
        # ni+vowel keeps the prefix out of RV (nier, niant)
        rv = 3
    else:
        rv = n
        for i in range(1, n):
            if _is_vowel(word[i]):
                rv = i + 1
                break

    def after_vc(start: int) -> int:
        for i in range(start, n - 1):
            if _is_vowel(word[i]) and not _is_vowel(word[i + 1]):
                return i + 2
        return n

    r1 = after_vc(0)
    r2 = after_vc(r1) if r1 < n else n
    return rv, r1, r2


class _Stem:
    def __init__(self, word: str):
        self.w = word
        self.rv, self.r1, self.r2 = _regions(word)

    def ends(self, suf: str) -> bool:
        return self.w.endswith(suf)

    def start_of(self, suf: str) -> int:
        return len(self.w) - len(suf)

    def cut(self, suf: str, repl: str = "") -> None:
        self.w = self.w[: len(self.w) - len(suf)] + repl

    # --- step 1 ---------------------------------------------------------
    def standard_suffix(self) -> bool:
        """Returns True when step 1 counts as having removed a suffix."""
        suf = _longest_suffix(self.w, _STEP1)
        if suf is None:
            return False
        kind = _STEP1[suf]
        pos = self.start_of(suf)
        in_r1, in_r2, in_rv = pos >= self.r1, pos >= self.r2, pos >= self.rv

        if kind == "r2_delete":
            if not in_r2:
                return False
            self.cut(suf)
            return True
        if kind == "atrice":
            if not in_r2:
                return False
            self.cut(suf)
            if self.ends("ic"):
                if self.start_of("ic") >= self.r2:
                    self.cut("ic")
                else:
                    self.cut("ic", "iqU")
            return True
        if kind == "logie":
            if not in_r2:
                return False
            self.cut(suf, "log")
            return True
        if kind == "usion":
            if not in_r2:
                return False
            self.cut(suf, "u")
            return True
        if kind == "ence":
            if not in_r2:
                return False
            self.cut(suf, "ent")
            return True
        if kind == "ement":
            if not in_rv:
                return False
            self.cut(suf)
            pre = _longest_suffix(self.w, ("iv", "eus", "abl", "iqU", "ièr", "Ièr"))
            if pre == "iv":
                if self.start_of("iv") >= self.r2:
                    self.cut("iv")
                    if self.ends("at") and self.start_of("at") >= self.r2:
                        self.cut("at")
            elif pre == "eus":
                p = self.start_of("eus")
                if p >= self.r2:
                    self.cut("eus")
                elif p >= self.r1:
                    self.cut("eus", "eux")
            elif pre in ("abl", "iqU"):
                if self.start_of(pre) >= self.r2:
                    self.cut(pre)
            elif pre in ("ièr", "Ièr"):
                if self.start_of(pre) >= self.rv:
                    self.cut(pre, "i")
            return True
        if kind == "ite":
            if not in_r2:
                return False
            self.cut(suf)
            pre = _longest_suffix(self.w, ("abil", "ic", "iv"))
            if pre == "abil":
                if self.start_of(pre) >= self.r2:
                    self.cut(pre)
                else:
                    self.cut(pre, "abl")
            elif pre == "ic":
                if self.start_of(pre) >= self.r2:
                    self.cut(pre)
                else:
                    self.cut(pre, "iqU")
            elif pre == "iv":
                if self.start_of(pre) >= self.r2:
                    self.cut(pre)
            return True
        if kind == "if":
            if not in_r2:
                return False
            self.cut(suf)
            if self.ends("at") and self.start_of("at") >= self.r2:
                self.cut("at")
                if self.ends("ic"):
                    if self.start_of("ic") >= self.r2:
                        self.cut("ic")
                    else:
                        self.cut("ic", "iqU")
            return True
        if kind == "eaux":
            self.cut(suf, "eau")
            return True
        if kind == "aux":
            if not in_r1:
                return False
            self.cut(suf, "al")
            return True
        if kind == "euse":
            if in_r2:
                self.cut(suf)
                return True
            if in_r1:
                self.cut(suf, "eux")
                return True
            return False
        if kind == "issement":
            if in_r1 and pos > 0 and not _is_vowel(self.w[pos - 1]):
                self.cut(suf)
                return True
            return False
        if kind == "amment":
            if in_rv:
                self.cut(suf, "ant")
            return False
        if kind == "emment":
            if in_rv:
                self.cut(suf, "ent")
            return False
        if kind == "ment":
            if pos > 0 and _is_vowel(self.w[pos - 1]) and pos - 1 >= self.rv:
                self.cut(suf)
            return False
        raise AssertionError(kind)

    # --- step 2 ---------------------------------------------------------
    def i_verb_suffix(self) -> bool:
        suf = _longest_suffix(self.w, _STEP2A, self.rv)
        if suf is None:
            return False
        pos = self.start_of(suf)
        if pos - 1 < self.rv:
            return False
        prev = self.w[pos - 1]
        if prev == "H" or _is_vowel(prev):
            return False
        self.cut(suf)
        return True

    def verb_suffix(self) -> bool:
        suf = _longest_suffix(self.w, _STEP2B, self.rv)
        if suf is None:
            return False
        if suf == "ions":
            if self.start_of(suf) < self.r2:
                return False
            self.cut(suf)
            return True
        if suf in _AIS_FAMILY and _keeps_ais(self.w[: self.start_of(suf)]):
            return False
        self.cut(suf)
        if suf in _STEP2B_A and self.ends("e") and self.start_of("e") >= self.rv:
            self.cut("e")
        return True

    # --- step 4 ---------------------------------------------------------
    def residual_suffix(self) -> None:
        if self.ends("oux") and len(self.w) > 3 and self.w[-4] in _OUX_DROP_X_AFTER:
            self.w = self.w[:-1]
            return
        if self.ends("s") and len(self.w) >= 2:
            before = self.w[:-1]
            if before.endswith("Hi") or before[-1] not in _KEEP_WITH_S:
                self.w = before
        suf = _longest_suffix(self.w, _STEP4, self.rv)
        if suf is None:
            return
        kind = _STEP4[suf]
        pos = self.start_of(suf)
        if kind == "ion":
            if pos >= self.r2 and pos - 1 >= self.rv and self.w[pos - 1] in "st":
                self.cut(suf)
        elif kind == "ier":
            self.cut(suf, "i")
        else:
            self.cut(suf)

    def un_double(self) -> None:
        for suf in ("enn", "onn", "ett", "ell", "eill"):
            if self.ends(suf):
                self.w = self.w[:-1]
                return

    def un_accent(self) -> None:
        i = len(self.w)
        while i > 0 and not _is_vowel(self.w[i - 1]):
            i -= 1
        if i < len(self.w) and i > 0 and self.w[i - 1] in "éè":
            self.w = self.w[: i - 1] + "e" + self.w[i:]


def _postlude(word: str) -> str:
    word = word.replace("He", "ë").replace("Hi", "ï").replace("H", "")
    return word.replace("I", "i").replace("U", "u").replace("Y", "y")


def stem(word: str) -> str:
    """Stem one lower-case French word."""
    if not word:
        return word
    st = _Stem(_prelude(word))
    done = st.standard_suffix()
    if not done:
        # step 1 may have rewritten amment/emment/ment before failing
        done = st.i_verb_suffix() or st.verb_suffix()
    if done:
        if st.w.endswith("Y"):
            st.w = st.w[:-1] + "i"
        elif st.w.endswith("ç"):
            st.w = st.w[:-1] + "c"
    else:
        st.residual_suffix()
    st.un_double()
    st.un_accent()
    return _postlude(st.w)
