"""The built-in demonstration: a managed tuple/list cycle handed to native code."""

DEMO_SCRIPT = """\
# lst = ([0, "test"],); lst[0][0] = lst
NEW t tuple GC "([([...],), 'test'],)" MANAGED
NEW l list GC "[([...],), 'test']" MANAGED
NEW s str "test" MANAGED
LINK t 0 l
LINK l 0 t
LINK l 1 s
DROP l
DROP s
# argument tuple of a native call taking lst
NEW args tuple GC "(([([...],), 'test'],),)" MANAGED
LINK args 0 t
PASSN nargs args
DROP nargs
DROP args
# del lst
DROP t
REPORT
GC
REPORT
ASSERT_LEAKS 0
"""
