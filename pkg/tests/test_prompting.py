from hypothesis import given, settings
from hypothesis import strategies as st

from pocketann import assemble_prompt
from pocketann.prompting import CONTEXT_JOINER, CONTEXT_PLACEHOLDER, USER_PLACEHOLDER


class TestExamples:
    def test_documented_substitution(self):
        out = assemble_prompt("Q: {{user}}\nCtx: {{context}}", "hi", ["a", "b"])
        assert out == "Q: hi\nCtx: a\n\n---\n\nb"

    def test_template_without_placeholders_verbatim(self):
        template = "no placeholders here {user} {{ctx}}"
        assert assemble_prompt(template, "anything", ["x"]) == template

    def test_no_recursive_substitution_from_user_query(self):
        out = assemble_prompt("{{user}}|{{context}}", "contains {{context}} literally", ["CTX"])
        assert out == "contains {{context}} literally|CTX"

    def test_no_recursive_substitution_from_documents(self):
        out = assemble_prompt("{{context}}", "u", ["doc with {{user}} inside"])
        assert out == "doc with {{user}} inside"

    def test_repeated_placeholders(self):
        out = assemble_prompt("{{user}} {{user}} {{context}} {{context}}", "U", ["c1", "c2"])
        assert out == "U U c1\n\n---\n\nc2 c1\n\n---\n\nc2"

    def test_empty_contexts(self):
        assert assemble_prompt("[{{context}}]", "u", []) == "[]"


def _scan_oracle(template: str, user_query: str, context_texts) -> str:
    """Independent index-scanning substitution used to check the regex path."""
    joined = CONTEXT_JOINER.join(context_texts)
    out = []
    i = 0
    while i < len(template):
        if template.startswith(USER_PLACEHOLDER, i):
            out.append(user_query)
            i += len(USER_PLACEHOLDER)
        elif template.startswith(CONTEXT_PLACEHOLDER, i):
            out.append(joined)
            i += len(CONTEXT_PLACEHOLDER)
        else:
            out.append(template[i])
            i += 1
    return "".join(out)


template_text = st.text(alphabet=list("abc{}u "), max_size=60)
chunks = st.lists(
    st.sampled_from(["{{user}}", "{{context}}", "plain ", "{{", "}}", "u", "\n"]),
    max_size=12,
).map("".join)


class TestProperties:
    @given(chunks, st.text(max_size=20), st.lists(st.text(max_size=15), max_size=4))
    @settings(max_examples=300)
    def test_matches_scanning_oracle(self, template, user_query, contexts):
        assert assemble_prompt(template, user_query, contexts) == _scan_oracle(template, user_query, contexts)

    @given(template_text, st.lists(st.text(max_size=10), min_size=1, max_size=4))
    @settings(max_examples=200)
    def test_user_query_appears_once_per_placeholder(self, template, contexts):
        sentinel = "☃UNIQUE-SENTINEL☃"
        expected = template.count(USER_PLACEHOLDER)
        out = assemble_prompt(template, sentinel, contexts)
        assert out.count(sentinel) == expected

    @given(chunks, st.lists(st.text(alphabet=list("xyz "), min_size=1, max_size=8), min_size=1, max_size=4))
    @settings(max_examples=200)
    def test_contexts_appear_in_order_with_joiner(self, template, contexts):
        if CONTEXT_PLACEHOLDER not in template:
            return
        out = assemble_prompt(template, "", contexts)
        joined = CONTEXT_JOINER.join(contexts)
        assert joined in out
        # all context texts present in order inside the joined block
        pos = 0
        for ctx in contexts:
            found = joined.find(ctx, pos)
            assert found >= 0
            pos = found + len(ctx)

    @given(st.text(max_size=40), st.lists(st.text(max_size=10), max_size=3))
    @settings(max_examples=200)
    def test_placeholder_free_templates_are_identity(self, template, contexts):
        if USER_PLACEHOLDER in template or CONTEXT_PLACEHOLDER in template:
            return
        assert assemble_prompt(template, "user", contexts) == template
