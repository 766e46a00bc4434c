// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/digest.hpp"
#include "splatopt/program.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace splatopt;

namespace {

const std::string kOneBlock = "head\n"
                              "// EVOLVE-BLOCK-START\n"
                              "a\n"
                              "b\n"
                              "c\n"
                              "// EVOLVE-BLOCK-END\n"
                              "tail\n";

const std::string kTwoBlocks = "prefix\n"
                               "/* EVOLVE-BLOCK-START */\n"
                               "x = 1;\n"
                               "/* EVOLVE-BLOCK-END */\n"
                               "middle\n"
                               "# EVOLVE-BLOCK-START\n"
                               "y = 2;\n"
                               "# EVOLVE-BLOCK-END\n";

// Random marker-balanced text for round-trip checks.
std::string random_program(std::uint64_t seed) {
    Rng rng(seed);
    static const char *kLines[] = {"int x = 0;", "", "  for (;;) {}", "\t// comment", "}", "x += 1;"};
    std::string text;
    const std::size_t blocks = rng.below(4);
    for (std::size_t b = 0; b <= blocks; ++b) {
        const std::size_t outside = rng.below(4);
        for (std::size_t i = 0; i < outside; ++i) text += std::string(kLines[rng.below(6)]) + "\n";
        if (b == blocks) break;
        text += "// EVOLVE-BLOCK-START\n";
        const std::size_t inside = rng.below(5);
        for (std::size_t i = 0; i < inside; ++i) text += std::string(kLines[rng.below(6)]) + "\n";
        text += "// EVOLVE-BLOCK-END\n";
    }
    if (rng.bernoulli(0.3)) text += "no newline at end";
    return text;
}

} // namespace

TEST(ExtractBlocks, SinglePairHoldsThreeLines) {
    const auto p = extract_blocks(kOneBlock);
    ASSERT_EQ(p.blocks().size(), 1u);
    EXPECT_EQ(p.blocks()[0].body, "a\nb\nc\n");
    EXPECT_EQ(p.blocks()[0].start_line, 3u);
    EXPECT_EQ(p.blocks()[0].end_line, 5u);
    EXPECT_EQ(p.full_text(), kOneBlock);
}

TEST(ExtractBlocks, NoMarkersKeepsText) {
    const std::string text = "just\ncode\n";
    const auto p = extract_blocks(text);
    EXPECT_TRUE(p.blocks().empty());
    EXPECT_EQ(p.full_text(), text);
    EXPECT_EQ(p.reassemble(), text);
}

TEST(ExtractBlocks, StartWithoutEndThrows) {
    EXPECT_THROW(extract_blocks("// EVOLVE-BLOCK-START\nbody\n"), UnbalancedMarkers);
}

TEST(ExtractBlocks, EndWithoutStartThrows) {
    EXPECT_THROW(extract_blocks("body\n// EVOLVE-BLOCK-END\n"), UnbalancedMarkers);
}

TEST(ExtractBlocks, NestedStartThrows) {
    EXPECT_THROW(extract_blocks("// EVOLVE-BLOCK-START\n// EVOLVE-BLOCK-START\n// EVOLVE-BLOCK-END\n"),
                 UnbalancedMarkers);
}

TEST(ExtractBlocks, BothMarkersOnOneLineThrows) {
    EXPECT_THROW(extract_blocks("// EVOLVE-BLOCK-START EVOLVE-BLOCK-END\n"), UnbalancedMarkers);
}

TEST(ExtractBlocks, MarkerLinesKeepTheirCommentSyntax) {
    const auto p = extract_blocks(kTwoBlocks);
    ASSERT_EQ(p.blocks().size(), 2u);
    ASSERT_EQ(p.outside().size(), 3u);
    EXPECT_EQ(p.outside()[0], "prefix\n/* EVOLVE-BLOCK-START */\n");
    EXPECT_EQ(p.outside()[1], "/* EVOLVE-BLOCK-END */\nmiddle\n# EVOLVE-BLOCK-START\n");
    EXPECT_EQ(p.outside()[2], "# EVOLVE-BLOCK-END\n");
    EXPECT_EQ(p.blocks()[1].body, "y = 2;\n");
}

TEST(ExtractBlocks, EmptyBodyLineNumbers) {
    const auto p = extract_blocks("// EVOLVE-BLOCK-START\n// EVOLVE-BLOCK-END\n");
    ASSERT_EQ(p.blocks().size(), 1u);
    EXPECT_EQ(p.blocks()[0].body, "");
    EXPECT_EQ(p.blocks()[0].start_line, p.blocks()[0].end_line + 1);
}

TEST(ExtractBlocks, RoundTripOverGeneratedTexts) {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        const std::string text = random_program(seed);
        const auto p = extract_blocks(text);
        EXPECT_EQ(p.reassemble(), text) << "seed " << seed;
        EXPECT_EQ(p.full_text(), text) << "seed " << seed;
        for (const auto &b : p.blocks()) EXPECT_EQ(b.body.find("EVOLVE-BLOCK"), std::string::npos);
    }
}

TEST(LineEndings, CrlfIsNormalizedAndRestored) {
    const std::string crlf = "a\r\n// EVOLVE-BLOCK-START\r\nb\r\n// EVOLVE-BLOCK-END\r\n";
    const auto p = extract_blocks(crlf);
    EXPECT_EQ(p.line_ending(), LineEnding::CRLF);
    EXPECT_EQ(p.full_text().find('\r'), std::string::npos);
    EXPECT_EQ(p.serialized(), crlf);
    const auto q = apply_modification(p, {"m", "", {{0, "c\n"}}});
    EXPECT_EQ(q.serialized(), "a\r\n// EVOLVE-BLOCK-START\r\nc\r\n// EVOLVE-BLOCK-END\r\n");
}

TEST(LineEndings, MixedEndingsAreKept) {
    LineEnding e;
    EXPECT_EQ(normalize_line_endings("a\r\nb\n", &e), "a\r\nb\n");
    EXPECT_EQ(e, LineEnding::LF);
}

TEST(ApplyModification, IdentityIsByteIdentical) {
    const auto p = extract_blocks(kTwoBlocks);
    const auto q = apply_modification(p, {"id", "identity", {{0, p.blocks()[0].body}, {1, p.blocks()[1].body}}});
    EXPECT_EQ(q.full_text(), p.full_text());
}

TEST(ApplyModification, OnlyTargetBlockChanges) {
    const auto p = extract_blocks("// EVOLVE-BLOCK-START\na\n// EVOLVE-BLOCK-END\n"
                                  "// EVOLVE-BLOCK-START\nz\n// EVOLVE-BLOCK-END\n");
    const auto q = apply_modification(p, {"m1", "", {{0, "b\n"}}});
    EXPECT_EQ(q.blocks()[0].body, "b\n");
    EXPECT_EQ(q.blocks()[1].body, "z\n");
    EXPECT_FALSE(diff_outside_blocks(p, q.full_text()));
}

TEST(ApplyModification, MissingNewlineIsAdded) {
    const auto p = extract_blocks(kOneBlock);
    const auto q = apply_modification(p, {"m", "", {{0, "no newline"}}});
    EXPECT_EQ(q.blocks()[0].body, "no newline\n");
    EXPECT_FALSE(diff_outside_blocks(p, q.full_text()));
}

TEST(ApplyModification, UnknownIndexThrows) {
    const auto p = extract_blocks(kOneBlock);
    EXPECT_THROW(apply_modification(p, {"m", "", {{1, "x\n"}}}), UnknownBlockIndex);
}

TEST(ApplyModification, MarkerInReplacementThrows) {
    const auto p = extract_blocks(kOneBlock);
    EXPECT_THROW(apply_modification(p, {"m", "", {{0, "// EVOLVE-BLOCK-END\n"}}}), UnbalancedMarkers);
}

TEST(ApplyModification, DisjointModificationsCommute) {
    const auto p = extract_blocks(kTwoBlocks);
    const Modification m1{"m1", "", {{0, "x = 10;\n"}}};
    const Modification m2{"m2", "", {{1, "y = 20;\nz = 3;\n"}}};
    const auto a = apply_modification(apply_modification(p, m1), m2);
    const auto b = apply_modification(apply_modification(p, m2), m1);
    EXPECT_EQ(a.full_text(), b.full_text());
}

TEST(ApplyModification, NeverTouchesOutsideText) {
    Rng rng(99);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto p = extract_blocks(random_program(seed));
        if (p.blocks().empty()) continue;
        Modification m{"m", "", {}};
        m.replacements[rng.below(p.blocks().size())] = std::string(rng.below(3), 'q') + "\n";
        const auto q = apply_modification(p, m);
        EXPECT_FALSE(diff_outside_blocks(p, q.full_text())) << "seed " << seed;
    }
}

TEST(ModificationSequence, BoundIsEnforced) {
    ModificationSequence s(2);
    s.push({"1", "", {}});
    s.push({"2", "", {}});
    EXPECT_THROW(s.push({"3", "", {}}), SequenceFull);
    EXPECT_LE(s.steps().size(), s.bound());
}

TEST(ModificationSequence, ApplySequenceComposes) {
    const auto p = extract_blocks(kOneBlock);
    ModificationSequence s(3);
    s.push({"1", "", {{0, "one\n"}}});
    s.push({"2", "", {{0, "two\n"}}});
    const auto q = apply_sequence(p, s);
    EXPECT_EQ(q.blocks()[0].body, "two\n");
    EXPECT_EQ(q.full_text(), apply_modification(apply_modification(p, s.steps()[0]), s.steps()[1]).full_text());
}

TEST(DiffOutsideBlocks, Cases) {
    const auto p = extract_blocks(kOneBlock);
    EXPECT_FALSE(diff_outside_blocks(p, kOneBlock));
    EXPECT_FALSE(diff_outside_blocks(p, "head\n// EVOLVE-BLOCK-START\nnew body\n// EVOLVE-BLOCK-END\ntail\n"));
    EXPECT_TRUE(diff_outside_blocks(p, kOneBlock + "extra\n"));
    EXPECT_TRUE(diff_outside_blocks(p, "head\n// EVOLVE-BLOCK-START\na\n// EVOLVE-BLOCK-END\nTAIL\n"));
    EXPECT_TRUE(diff_outside_blocks(p, "head\ntail\n"));
    EXPECT_THROW(diff_outside_blocks(p, "head\n// EVOLVE-BLOCK-START\na\ntail\n"), UnbalancedMarkers);
}

TEST(ProgramFiles, SaveAndLoad) {
    const auto dir = std::filesystem::temp_directory_path() / "splatopt_test_program";
    std::filesystem::create_directories(dir);
    const auto path = dir / "k.cu";
    const auto p = extract_blocks(kTwoBlocks);
    save_program(p, path);
    const auto q = load_program(path);
    EXPECT_EQ(q.full_text(), p.full_text());
    EXPECT_EQ(q.origin_path(), path);
    std::filesystem::remove_all(dir);
}
