"""Closed-class word lists and open-class stem lists for the tagger.

Everything is lowercase; lookups lowercase the token first. The lists are
deliberately small and frozen: growing them changes parser output, which is
a ruleset version bump (see parser.lock at the package root).
"""

DETERMINERS = frozenset(
    """a an the this that these those each every either neither no some any
    all both another such its his her their our your my""".split()
)

PREPOSITIONS = frozenset(
    """at in on of to with from by for under over during near against
    between through across behind below above into onto within without
    along past after before around beside via per upon off since until
    toward towards inside outside about""".split()
)

AUXILIARIES = frozenset(
    """is are was were be been being am has have had does do did will would
    can could may might must shall should""".split()
)

PRONOUNS = frozenset(
    """i you he she it we they me him us them himself herself itself
    themselves myself yourself ourselves one who whom which what""".split()
)

COORDINATORS = frozenset("and or but nor yet".split())

SUBORDINATORS = frozenset(
    "if because while when although unless whereas once whether that".split()
)

PARTICLES = frozenset("not n't".split())

# adverbs that do not end in -ly
ADVERBS = frozenset(
    """normally typically usually often never always sometimes rarely soon
    now then here there again also too very quite rather almost just only
    still already yet even once twice away back down up out together
    apart forward backward well fast hard late early enough""".split()
)

NUMBER_WORDS = frozenset(
    """zero one two three four five six seven eight nine ten eleven twelve
    thirteen fourteen fifteen sixteen seventeen eighteen nineteen twenty
    thirty forty fifty sixty seventy eighty ninety hundred thousand
    million billion first second third fourth fifth""".split()
)

ADJECTIVES = frozenset(
    """main upper lower inner outer new old hot cold high low normal rapid
    slow quick large small big little long short open closed full empty
    heavy light wet dry clean dirty safe loose tight spare primary
    secondary rear front left right deep shallow coarse fine rough smooth
    warm cool late early good bad ready steady faulty worn broken stable
    idle active manual automatic electric thermal hydraulic several
    single double due same other common rated nominal maximum minimum""".split()
)

# base verb stems; the tagger also recognizes -s/-es/-ed/-ing inflections
VERB_STEMS = frozenset(
    """trip open close engage release charge drain fill heat cool spin lock
    seal vent purge scan read drive hold lift drop feed tap mark guard
    link loop store turn power move grip cut clean check test rate limit
    boost damp meter time gate sync tune trim load park run idle start
    stop set reset press pull push lower raise mount remove replace
    install adjust align measure record report warn fail pass begin end
    keep take make give get go come see show use need want tell say ask
    call find know think work play leave put bring wear break fix warm
    share leak flow blow grow draw send spend build bend lend stand
    switch latch clamp bolt weld braze flush rinse soak wipe spray coat
    prime bleed jack hoist winch steer brake shift stall surge creep
    drift slip skid roll slide swing tilt pivot rotate oscillate vibrate
    hum buzz click tick snap pop crack burst split tear rip fray wear
    act list learn add subtract multiply divide count number label tag
    stamp etch score notch drill bore ream hone grind mill lathe face
    chamfer deburr polish buff wax oil grease lube service maintain
    inspect verify confirm certify approve reject accept deliver ship
    pack unpack wrap strap tie untie fasten unfasten screw unscrew""".split()
)

# irregular past/participle forms mapped to their stems
IRREGULAR_VERBS = {
    "was": "be", "were": "be", "been": "be", "being": "be", "is": "be",
    "are": "be", "am": "be", "has": "have", "had": "have", "does": "do",
    "did": "do", "done": "do", "went": "go", "gone": "go", "came": "come",
    "saw": "see", "seen": "see", "took": "take", "taken": "take",
    "gave": "give", "given": "give", "made": "make", "got": "get",
    "held": "hold", "fed": "feed", "read": "read", "ran": "run",
    "left": "leave", "put": "put", "cut": "cut", "set": "set",
    "kept": "keep", "told": "tell", "said": "say", "found": "find",
    "knew": "know", "known": "know", "thought": "think", "worn": "wear",
    "wore": "wear", "broke": "break", "broken": "break", "drew": "draw",
    "drawn": "draw", "sent": "send", "spent": "spend", "built": "build",
    "bent": "bend", "stood": "stand", "blew": "blow", "blown": "blow",
    "grew": "grow", "grown": "grow", "bled": "bleed", "torn": "tear",
    "tore": "tear", "slid": "slide", "swung": "swing", "burst": "burst",
    "split": "split", "shut": "shut",
}

ADJ_SUFFIXES = ("able", "ible", "ful", "less", "ous", "ive", "ical")
