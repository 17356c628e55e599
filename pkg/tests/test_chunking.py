import copy
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from answerbank.chunking import (
    ELEMENT_SEPARATOR,
    build_leaves,
    build_tree,
    document_stream,
    iter_nodes_top_down,
    load_tree,
    save_tree,
    token_count,
)
from answerbank.enrich import EnrichedElement, Provenance
from answerbank.errors import EmptyDocument
from answerbank.gateway import MockChatProvider
from answerbank.ingest import ElementKind


def make_elements(texts):
    return [
        EnrichedElement(
            element_id=f"e{i}",
            kind=ElementKind.TEXT,
            text=text,
            provenance=Provenance.OCR,
            page=1,
            order=i,
            bbox=(0.0, float(i), 10.0, float(i) + 1.0),
        )
        for i, text in enumerate(texts)
    ]


def words(n, tag="w"):
    return " ".join(f"{tag}{i}" for i in range(n))


class TestTokenCount:
    def test_whitespace_rule(self):
        assert token_count("one  two\nthree\tfour") == 4
        assert token_count("   ") == 0
        assert token_count("") == 0


class TestBuildLeaves:
    def test_empty_rejected(self):
        with pytest.raises(EmptyDocument):
            build_leaves([])
        with pytest.raises(EmptyDocument):
            build_leaves(make_elements(["   "]))

    def test_bad_target_rejected(self):
        with pytest.raises(ValueError):
            build_leaves(make_elements(["a"]), target_tokens=0)

    def test_single_small_element_single_leaf(self):
        leaves = build_leaves(make_elements(["just five words right here"]),
                              target_tokens=16)
        assert len(leaves) == 1
        assert leaves[0].text == "just five words right here"
        assert leaves[0].source_element_ids == ["e0"]

    def test_packing_respects_budget(self):
        # 3-word elements plus 16-token budget: separator adds no tokens, so
        # five elements fit per leaf (15 tokens) and the sixth starts anew.
        leaves = build_leaves(make_elements([words(3, f"e{i}x") for i in range(6)]),
                              target_tokens=16)
        assert len(leaves) == 2
        assert [leaf.source_element_ids for leaf in leaves] == [
            ["e0", "e1", "e2", "e3", "e4"],
            ["e5"],
        ]

    def test_oversized_element_split_alone(self):
        elements = make_elements(["tiny one", words(25, "big"), "tail words"])
        leaves = build_leaves(elements, target_tokens=10)
        oversized = [l for l in leaves if l.source_element_ids == ["e1"]]
        assert len(oversized) == 3  # 25 tokens in 10-token pieces
        for leaf in leaves:
            if leaf.source_element_ids != ["e1"]:
                assert leaf.token_count <= 10

    def test_lossless_concatenation(self):
        elements = make_elements(["alpha beta", words(30, "m"), "tail"])
        leaves = build_leaves(elements, target_tokens=7)
        assert "".join(l.text for l in leaves) == document_stream(elements)

    def test_node_ids_sequential(self):
        leaves = build_leaves(make_elements([words(5), words(5), words(5)]),
                              target_tokens=5)
        assert [l.node_id for l in leaves] == ["doc/n0-0", "doc/n0-1", "doc/n0-2"]
        assert all(l.level == 0 and not l.child_ids for l in leaves)

    @settings(max_examples=60)
    @given(
        texts=st.lists(
            st.integers(min_value=1, max_value=40).map(lambda n: words(n)),
            min_size=1,
            max_size=8,
        ),
        target=st.integers(min_value=1, max_value=24),
    )
    def test_partition_property(self, texts, target):
        elements = make_elements(texts)
        leaves = build_leaves(elements, target_tokens=target)
        stream = document_stream(elements)
        assert "".join(l.text for l in leaves) == stream
        assert token_count(stream) == sum(l.token_count for l in leaves)
        for leaf in leaves:
            # Only a leaf holding part of a single oversized element may run
            # over budget, and then only via its trailing separator.
            if leaf.token_count > target:
                assert len(leaf.source_element_ids) == 1


class TestBuildTree:
    def build(self, n_leaves, fan_out=3):
        leaves = build_leaves(
            make_elements([words(4, f"t{i}x") for i in range(n_leaves)]),
            target_tokens=4,
        )
        assert len(leaves) == n_leaves
        return build_tree(leaves, fan_out=fan_out, chat=MockChatProvider())

    def test_single_leaf_is_root(self):
        leaves = build_leaves(make_elements(["only text"]), target_tokens=8)
        tree = build_tree(leaves, fan_out=2)
        assert tree.height == 0
        assert tree.root_id == leaves[0].node_id
        tree.validate("only text")

    def test_multi_leaf_requires_chat(self):
        leaves = build_leaves(make_elements([words(4), words(4)]), target_tokens=4)
        with pytest.raises(ValueError, match="chat provider"):
            build_tree(leaves, fan_out=2, chat=None)

    def test_bad_fan_out(self):
        leaves = build_leaves(make_elements(["one word"]), target_tokens=8)
        with pytest.raises(ValueError):
            build_tree(leaves, fan_out=1)

    @pytest.mark.parametrize(
        ("n_leaves", "fan_out", "height", "total"),
        [
            (2, 2, 1, 3),
            (5, 5, 1, 6),
            (6, 5, 2, 9),  # 6 leaves, 2 mid nodes, 1 root
            (9, 3, 2, 13),
            (10, 3, 3, 17),  # 10 -> 4 -> 2 -> 1
        ],
    )
    def test_shape(self, n_leaves, fan_out, height, total):
        tree = self.build(n_leaves, fan_out)
        assert tree.height == height
        assert len(tree.nodes) == total
        tree.validate()

    def test_consecutive_grouping(self):
        tree = self.build(7, fan_out=3)
        level1 = sorted(
            (n for n in tree.nodes.values() if n.level == 1),
            key=lambda n: n.node_id,
        )
        assert [n.child_ids for n in level1] == [
            ["doc/n0-0", "doc/n0-1", "doc/n0-2"],
            ["doc/n0-3", "doc/n0-4", "doc/n0-5"],
            ["doc/n0-6"],
        ]

    def test_parents_have_no_source_elements(self):
        tree = self.build(6, fan_out=5)
        for node in tree.nodes.values():
            if node.level > 0:
                assert node.source_element_ids == []
                assert node.text  # summaries are non-empty
            else:
                assert node.source_element_ids

    def test_leaves_in_order_matches_build_order(self):
        tree = self.build(8, fan_out=3)
        assert [l.node_id for l in tree.leaves_in_order()] == [
            f"doc/n0-{i}" for i in range(8)
        ]

    @settings(max_examples=25, deadline=None)
    @given(
        n_leaves=st.integers(min_value=1, max_value=30),
        fan_out=st.integers(min_value=2, max_value=6),
    )
    def test_invariants_property(self, n_leaves, fan_out):
        tree = self.build(n_leaves, fan_out)
        tree.validate()
        levels = [n for n in tree.nodes.values() if n.level == 0]
        assert len(levels) == n_leaves
        expected_height = (
            0 if n_leaves == 1 else max(1, math.ceil(math.log(n_leaves, fan_out)))
        )
        assert tree.height == expected_height


class TestValidateCatchesCorruption:
    def make_tree(self):
        leaves = build_leaves(
            make_elements([words(4, f"t{i}x") for i in range(6)]), target_tokens=4
        )
        return build_tree(leaves, fan_out=3, chat=MockChatProvider())

    def corrupt(self, mutate, match):
        tree = copy.deepcopy(self.make_tree())
        mutate(tree)
        with pytest.raises(ValueError, match=match):
            tree.validate()

    def test_stale_token_count(self):
        def mutate(tree):
            tree.nodes[tree.root_id].token_count += 1

        self.corrupt(mutate, "stale token_count")

    def test_dangling_child(self):
        def mutate(tree):
            tree.nodes[tree.root_id].child_ids.append("doc/n9-9")

        self.corrupt(mutate, "dangling")

    def test_leaf_with_children(self):
        def mutate(tree):
            tree.nodes["doc/n0-0"].child_ids = ["doc/n0-1"]

        self.corrupt(mutate, "level-0 iff childless")

    def test_orphan_node(self):
        def mutate(tree):
            node = copy.deepcopy(tree.nodes["doc/n0-0"])
            node.node_id = "doc/n0-99"
            tree.nodes[node.node_id] = node

        self.corrupt(mutate, "single root")

    def test_shared_child(self):
        def mutate(tree):
            a, b = (n for n in tree.nodes.values() if n.level == 1)
            b.child_ids.append(a.child_ids[0])

        self.corrupt(mutate, "two parents")

    def test_wrong_parent_level(self):
        def mutate(tree):
            tree.nodes[tree.root_id].level = 5
            tree.height = 5

        self.corrupt(mutate, "parent level rule")

    def test_wrong_height(self):
        def mutate(tree):
            tree.height = 7

        self.corrupt(mutate, "height")

    def test_leaf_text_mismatch(self):
        tree = copy.deepcopy(self.make_tree())
        with pytest.raises(ValueError, match="reproduce"):
            tree.validate("completely different text")


class TestOrderingAndPersistence:
    def make_tree(self, n=12):
        leaves = build_leaves(
            make_elements([words(4, f"t{i}x") for i in range(n)]), target_tokens=4
        )
        return build_tree(leaves, fan_out=3, chat=MockChatProvider())

    def test_iter_top_down_level_then_position(self):
        tree = self.make_tree(12)  # 12 -> 4 -> 2 -> 1: 19 nodes over 4 levels
        order = [n.node_id for n in iter_nodes_top_down(tree)]
        assert len(order) == len(tree.nodes) == 19
        assert order[0] == tree.root_id
        levels = [tree.nodes[i].level for i in order]
        assert levels == sorted(levels, reverse=True)
        # Within each level, numeric position ascending (n0-2 before n0-10).
        for lvl in set(levels):
            ids = [i for i in order if tree.nodes[i].level == lvl]
            positions = [int(i.rsplit("-", 1)[1]) for i in ids]
            assert positions == sorted(positions)

    def test_round_trip(self, tmp_path):
        tree = self.make_tree()
        path = tmp_path / "doc.tree.json"
        save_tree(tree, path)
        loaded = load_tree(path)
        assert loaded == tree
        loaded.validate()

    def test_save_is_deterministic(self, tmp_path):
        tree = self.make_tree()
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_tree(tree, a)
        save_tree(tree, b)
        assert a.read_bytes() == b.read_bytes()
