// Copyright 2026 The alskit Authors - All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "alskit/dataio.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "alskit/sparse.hpp"
#include "test_util.hpp"

namespace {

using alskit::BlockRef;
using alskit::Checkpoint;
using alskit::CsrMatrix;
using alskit::FactorKind;
using alskit::FactorMatrix;
using alskit::offset_t;
using alskit::RatingsFile;
using alskit::RatingsFormat;
using alskit::Triplet;

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
    ASSERT_TRUE(out.good());
}

CsrMatrix random_matrix(std::uint64_t seed, offset_t m, offset_t n, offset_t nnz) {
    std::mt19937_64 rng(seed);
    return alskit::csr_from_triplets(m, n, testutil::random_triplets(rng, m, n, nnz));
}

TEST(LoadRatings, TripletTextTwoLines) {
    testutil::ScopedTempDir tmp("load");
    const auto path = tmp.path() / "r.txt";
    write_text(path, "0 0 3.5\n1 2 4.0\n");
    const CsrMatrix a = alskit::load_ratings({path, RatingsFormat::triplet_text});
    EXPECT_EQ(a.rows, 2);
    EXPECT_EQ(a.cols, 3);
    EXPECT_EQ(a.nnz(), 2);
    EXPECT_FLOAT_EQ(a.values[0], 3.5f);
    EXPECT_EQ(a.col_idx[1], 2);
}

TEST(LoadRatings, MovielensShiftsToZeroBasedAndIgnoresTimestamp) {
    testutil::ScopedTempDir tmp("load");
    const auto path = tmp.path() / "u.data";
    write_text(path, "1\t5\t3\t881250949\n");
    const CsrMatrix a = alskit::load_ratings({path, RatingsFormat::movielens});
    EXPECT_EQ(a.rows, 1);
    EXPECT_EQ(a.cols, 5);
    ASSERT_EQ(a.nnz(), 1);
    EXPECT_EQ(a.col_idx[0], 4);
    EXPECT_FLOAT_EQ(a.values[0], 3.0f);
}

TEST(LoadRatings, DeclaredShapeWinsOverInference) {
    testutil::ScopedTempDir tmp("load");
    const auto path = tmp.path() / "r.txt";
    write_text(path, "0 0 1\n");
    const CsrMatrix a = alskit::load_ratings({path, RatingsFormat::triplet_text, 7, 9});
    EXPECT_EQ(a.rows, 7);
    EXPECT_EQ(a.cols, 9);
}

TEST(LoadRatings, IndexBeyondDeclaredShapeIsAnInputError) {
    testutil::ScopedTempDir tmp("load");
    const auto path = tmp.path() / "r.txt";
    write_text(path, "0 0 1\n5 1 2\n");
    try {
        alskit::load_ratings({path, RatingsFormat::triplet_text, 4, 4});
        FAIL() << "expected InputError";
    } catch (const alskit::InputError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(LoadRatings, MalformedLineReportsItsNumber) {
    testutil::ScopedTempDir tmp("load");
    const auto path = tmp.path() / "r.txt";
    write_text(path, "0 0 1.5\n0 bad 2\n");
    try {
        alskit::load_ratings({path, RatingsFormat::triplet_text});
        FAIL() << "expected InputError";
    } catch (const alskit::InputError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(LoadRatings, TrailingFieldInTripletTextRejectedBlankLinesSkipped) {
    testutil::ScopedTempDir tmp("load");
    const auto ok = tmp.path() / "ok.txt";
    write_text(ok, "0 0 1\n\n  \n1 1 2\n");
    EXPECT_EQ(alskit::load_ratings({ok, RatingsFormat::triplet_text}).nnz(), 2);
    const auto bad = tmp.path() / "bad.txt";
    write_text(bad, "0 0 1 99\n");
    EXPECT_THROW(alskit::load_ratings({bad, RatingsFormat::triplet_text}), alskit::InputError);
}

TEST(LoadRatings, MissingFileIsAnIoError) {
    EXPECT_THROW(alskit::load_ratings({"/nonexistent/r.txt", RatingsFormat::triplet_text}),
                 alskit::IoError);
}

TEST(BinaryCache, RoundTripIsBitExact) {
    testutil::ScopedTempDir tmp("cache");
    const CsrMatrix a = random_matrix(11, 23, 17, 140);
    const auto path = tmp.path() / "r.cache";
    alskit::save_binary_cache(a, path);
    const CsrMatrix b = alskit::load_binary_cache(path);
    EXPECT_EQ(a.rows, b.rows);
    EXPECT_EQ(a.cols, b.cols);
    EXPECT_EQ(a.row_ptr, b.row_ptr);
    EXPECT_EQ(a.col_idx, b.col_idx);
    EXPECT_EQ(a.values, b.values);
}

TEST(BinaryCache, LoadRatingsAcceptsCacheFormat) {
    testutil::ScopedTempDir tmp("cache");
    const CsrMatrix a = random_matrix(12, 9, 8, 30);
    const auto path = tmp.path() / "r.cache";
    alskit::save_binary_cache(a, path);
    const CsrMatrix b = alskit::load_ratings({path, RatingsFormat::binary_cache});
    EXPECT_EQ(testutil::matrix_digest(a), testutil::matrix_digest(b));
    EXPECT_THROW(alskit::load_ratings({path, RatingsFormat::binary_cache, 9, 99}),
                 alskit::InputError);
}

TEST(BinaryCache, TruncationAndBadMagicAreIoErrors) {
    testutil::ScopedTempDir tmp("cache");
    const CsrMatrix a = random_matrix(13, 9, 8, 30);
    const auto path = tmp.path() / "r.cache";
    alskit::save_binary_cache(a, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
    EXPECT_THROW(alskit::load_binary_cache(path), alskit::IoError);
    const auto junk = tmp.path() / "junk.cache";
    write_text(junk, "this is not a cache file at all, but long enough to read");
    EXPECT_THROW(alskit::load_binary_cache(junk), alskit::IoError);
}

TEST(SplitTrainTest, FractionMustBeStrictlyInsideUnitInterval) {
    const CsrMatrix r = random_matrix(20, 6, 6, 10);
    EXPECT_THROW(alskit::split_train_test(r, 0.0, 1), alskit::InputError);
    EXPECT_THROW(alskit::split_train_test(r, 1.0, 1), alskit::InputError);
    EXPECT_THROW(alskit::split_train_test(r, -0.3, 1), alskit::InputError);
}

TEST(SplitTrainTest, TinyFractionHoldsOutNothing) {
    const CsrMatrix r = random_matrix(21, 6, 6, 10);
    const auto split = alskit::split_train_test(r, 0.01, 7);  // floor(10 * 0.01) = 0
    EXPECT_TRUE(split.test.empty());
    EXPECT_EQ(split.train.row_ptr, r.row_ptr);
    EXPECT_EQ(split.train.col_idx, r.col_idx);
    EXPECT_EQ(split.train.values, r.values);
}

TEST(SplitTrainTest, SameSeedReproducesTheSplit) {
    const CsrMatrix r = random_matrix(22, 30, 25, 300);
    const auto s1 = alskit::split_train_test(r, 0.2, 99);
    const auto s2 = alskit::split_train_test(r, 0.2, 99);
    EXPECT_EQ(s1.test, s2.test);
    EXPECT_EQ(s1.train.values, s2.train.values);
}

TEST(SplitTrainTest, ExactCountAndUnionReproducesInput) {
    // 100x100 dense pattern: exactly 10,000 nonzeros, so a 0.1 holdout takes
    // exactly 1,000 of them.
    std::mt19937_64 rng(23);
    std::vector<Triplet> all;
    all.reserve(10000);
    for (offset_t u = 0; u < 100; ++u)
        for (offset_t v = 0; v < 100; ++v)
            all.push_back({u, v, static_cast<alskit::real_t>(testutil::unit(rng))});
    const CsrMatrix r = alskit::csr_from_triplets(100, 100, all);
    const auto split = alskit::split_train_test(r, 0.1, 424242);
    EXPECT_EQ(static_cast<offset_t>(split.test.size()), 1000);
    EXPECT_EQ(split.train.nnz(), 9000);

    std::vector<Triplet> merged = alskit::csr_to_triplets(split.train);
    merged.insert(merged.end(), split.test.begin(), split.test.end());
    std::sort(merged.begin(), merged.end(), [](const Triplet& a, const Triplet& b) {
        return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    EXPECT_EQ(merged, all);
}

TEST(SplitTrainTest, TestTripletsComeOutRowMajor) {
    const CsrMatrix r = random_matrix(24, 40, 30, 400);
    const auto split = alskit::split_train_test(r, 0.25, 5);
    ASSERT_FALSE(split.test.empty());
    for (std::size_t k = 1; k < split.test.size(); ++k) {
        const auto& a = split.test[k - 1];
        const auto& b = split.test[k];
        EXPECT_TRUE(std::tie(a.row, a.col) < std::tie(b.row, b.col));
    }
}

TEST(DuplicateSynthesize, IdentityCopy) {
    const CsrMatrix base = random_matrix(30, 8, 6, 20);
    const CsrMatrix dup = alskit::duplicate_synthesize(base, 1, 1);
    EXPECT_EQ(testutil::matrix_digest(base), testutil::matrix_digest(dup));
}

TEST(DuplicateSynthesize, SmallTilingShapeAndBlocks) {
    // 2x2 base with 2 nonzeros, duplicated 3 times down and 2 across.
    const std::vector<Triplet> t = {{0, 1, 2.0f}, {1, 0, 4.0f}};
    const CsrMatrix base = alskit::csr_from_triplets(2, 2, t);
    const CsrMatrix dup = alskit::duplicate_synthesize(base, 3, 2);
    EXPECT_EQ(dup.rows, 6);
    EXPECT_EQ(dup.cols, 4);
    EXPECT_EQ(dup.nnz(), 12);
    const auto grid = alskit::grid_partition(dup, 2, 3);
    for (int j = 0; j < 3; ++j) {
        for (int i = 0; i < 2; ++i) {
            const CsrMatrix& b = grid.block(i, j);
            EXPECT_EQ(b.rows, 2);
            EXPECT_EQ(b.nnz(), 2);
            EXPECT_EQ(b.col_idx[0] - b.col_offset, 1);
            EXPECT_EQ(b.col_idx[1] - b.col_offset, 0);
        }
    }
}

TEST(DuplicateSynthesize, EveryGridBlockEqualsTheBase) {
    const CsrMatrix base = random_matrix(31, 7, 5, 21);
    const offset_t horiz = 3;
    const offset_t vert = 2;
    const CsrMatrix dup = alskit::duplicate_synthesize(base, horiz, vert);
    EXPECT_EQ(dup.rows, horiz * base.rows);
    EXPECT_EQ(dup.cols, vert * base.cols);
    EXPECT_EQ(dup.nnz(), horiz * vert * base.nnz());
    const auto base_triplets = alskit::csr_to_triplets(base);
    const auto grid = alskit::grid_partition(dup, static_cast<int>(vert), static_cast<int>(horiz));
    for (int j = 0; j < grid.q; ++j) {
        for (int i = 0; i < grid.p; ++i) {
            auto local = alskit::csr_to_triplets(grid.block(i, j));
            for (Triplet& lt : local) lt.col -= grid.block(i, j).col_offset;
            EXPECT_EQ(local, base_triplets) << "block (" << i << ", " << j << ")";
        }
    }
}

TEST(DuplicateSynthesize, PerRowDensityIsPreserved) {
    const CsrMatrix base = random_matrix(32, 9, 6, 25);
    const CsrMatrix dup = alskit::duplicate_synthesize(base, 4, 3);
    for (offset_t h = 0; h < 4; ++h)
        for (offset_t u = 0; u < base.rows; ++u)
            EXPECT_EQ(dup.row_nnz(h * base.rows + u), 3 * base.row_nnz(u));
}

TEST(DuplicateSynthesize, NoiseIsSeededAndBounded) {
    const CsrMatrix base = random_matrix(33, 8, 6, 20);
    const CsrMatrix a = alskit::duplicate_synthesize(base, 2, 2, 0.25f, 77);
    const CsrMatrix b = alskit::duplicate_synthesize(base, 2, 2, 0.25f, 77);
    EXPECT_EQ(a.values, b.values);
    const CsrMatrix plain = alskit::duplicate_synthesize(base, 2, 2);
    for (std::size_t k = 0; k < a.values.size(); ++k)
        EXPECT_LE(std::abs(a.values[k] - plain.values[k]), 0.25f);
}

TEST(DuplicateSynthesize, ColumnOverflowIsACapacityError) {
    CsrMatrix wide;
    wide.rows = 1;
    wide.cols = offset_t{1} << 30;
    wide.row_ptr = {0, 1};
    wide.col_idx = {5};
    wide.values = {1.0f};
    EXPECT_THROW(alskit::duplicate_synthesize(wide, 1, 4), alskit::CapacityError);
    EXPECT_THROW(alskit::duplicate_synthesize(wide, 0, 1), alskit::InputError);
}

TEST(GridPersistence, MetaAndBlocksRoundTrip) {
    testutil::ScopedTempDir tmp("grid");
    const CsrMatrix r = random_matrix(40, 10, 8, 40);
    const auto grid = alskit::grid_partition(r, 2, 2);
    alskit::persist_grid(grid, tmp.path());
    const auto meta = alskit::load_grid_meta(tmp.path());
    EXPECT_EQ(meta.p, 2);
    EXPECT_EQ(meta.q, 2);
    EXPECT_EQ(meta.rows, 10);
    EXPECT_EQ(meta.cols, 8);
    EXPECT_EQ(meta.row_cuts, grid.row_cuts);
    EXPECT_EQ(meta.col_cuts, grid.col_cuts);
    for (int j = 0; j < 2; ++j) {
        for (int i = 0; i < 2; ++i) {
            const CsrMatrix b = alskit::load_block(tmp.path(), meta, i, j);
            EXPECT_EQ(testutil::matrix_digest(b), testutil::matrix_digest(grid.block(i, j)));
        }
    }
    EXPECT_THROW(alskit::load_block(tmp.path(), meta, 2, 0), alskit::InputError);
}

TEST(BlockStream, SingleBlockYieldsOnceThenEnds) {
    testutil::ScopedTempDir tmp("stream");
    const CsrMatrix r = random_matrix(41, 6, 6, 12);
    alskit::persist_grid(alskit::grid_partition(r, 1, 1), tmp.path());
    auto stream = alskit::stream_blocks(tmp.path(), {{0, 0}});
    auto first = stream.next();
    ASSERT_TRUE(first.has_value());
    EXPECT_EQ(first->ref, (BlockRef{0, 0}));
    EXPECT_EQ(first->block.nnz(), 12);
    EXPECT_FALSE(stream.next().has_value());
}

TEST(BlockStream, YieldsInExactPlanOrder) {
    testutil::ScopedTempDir tmp("stream");
    const CsrMatrix r = random_matrix(42, 12, 10, 60);
    alskit::persist_grid(alskit::grid_partition(r, 2, 2), tmp.path());
    const std::vector<BlockRef> plan = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    auto stream = alskit::stream_blocks(tmp.path(), plan);
    for (const BlockRef& expected : plan) {
        auto got = stream.next();
        ASSERT_TRUE(got.has_value());
        EXPECT_EQ(got->ref, expected);
    }
    EXPECT_FALSE(stream.next().has_value());
}

TEST(BlockStream, StreamedContentMatchesDirectLoads) {
    testutil::ScopedTempDir tmp("stream");
    const CsrMatrix r = random_matrix(43, 15, 12, 90);
    alskit::persist_grid(alskit::grid_partition(r, 3, 2), tmp.path());
    const auto meta = alskit::load_grid_meta(tmp.path());
    auto stream = alskit::stream_blocks(tmp.path(), alskit::row_major_order(meta));
    while (auto got = stream.next()) {
        const CsrMatrix direct = alskit::load_block(tmp.path(), meta, got->ref.i, got->ref.j);
        EXPECT_EQ(testutil::matrix_digest(got->block), testutil::matrix_digest(direct));
    }
}

TEST(BlockStream, MissingBlockFileNamesItsPosition) {
    testutil::ScopedTempDir tmp("stream");
    const CsrMatrix r = random_matrix(44, 12, 10, 50);
    alskit::persist_grid(alskit::grid_partition(r, 2, 2), tmp.path());
    std::filesystem::remove(tmp.path() / "block_1_0.bin");
    auto stream = alskit::stream_blocks(tmp.path(), {{0, 0}, {1, 0}});
    EXPECT_TRUE(stream.next().has_value());
    try {
        stream.next();
        FAIL() << "expected IoError";
    } catch (const alskit::IoError& e) {
        EXPECT_NE(std::string(e.what()).find("block (1, 0)"), std::string::npos);
    }
}

Checkpoint make_checkpoint(int iteration, FactorKind which, std::uint64_t digest,
                           std::uint64_t seed) {
    return {iteration, which, alskit::random_factor(6, 4, seed), digest};
}

TEST(Checkpoints, WriteThenRestoreIsBitExact) {
    testutil::ScopedTempDir tmp("ckpt");
    const Checkpoint cp = make_checkpoint(5, FactorKind::theta, 1234, 50);
    const auto path = alskit::write_checkpoint(cp, tmp.path());
    EXPECT_TRUE(std::filesystem::exists(path));
    EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
    const auto restored = alskit::restore_latest(tmp.path());
    ASSERT_TRUE(restored.has_value());
    EXPECT_EQ(restored->iteration, 5);
    EXPECT_EQ(restored->which, FactorKind::theta);
    EXPECT_EQ(restored->digest, 1234u);
    EXPECT_EQ(restored->factor.entries, cp.factor.entries);
}

TEST(Checkpoints, ThetaOutranksXAtTheSameIteration) {
    testutil::ScopedTempDir tmp("ckpt");
    alskit::write_checkpoint(make_checkpoint(3, FactorKind::x, 1, 51), tmp.path());
    alskit::write_checkpoint(make_checkpoint(3, FactorKind::theta, 1, 52), tmp.path());
    const auto restored = alskit::restore_latest(tmp.path());
    ASSERT_TRUE(restored.has_value());
    EXPECT_EQ(restored->iteration, 3);
    EXPECT_EQ(restored->which, FactorKind::theta);
}

TEST(Checkpoints, LaterXOutranksEarlierTheta) {
    testutil::ScopedTempDir tmp("ckpt");
    alskit::write_checkpoint(make_checkpoint(3, FactorKind::theta, 1, 53), tmp.path());
    alskit::write_checkpoint(make_checkpoint(4, FactorKind::x, 1, 54), tmp.path());
    const auto restored = alskit::restore_latest(tmp.path());
    ASSERT_TRUE(restored.has_value());
    EXPECT_EQ(restored->iteration, 4);
    EXPECT_EQ(restored->which, FactorKind::x);
}

TEST(Checkpoints, EmptyOrAbsentDirectoryMeansStartFresh) {
    testutil::ScopedTempDir tmp("ckpt");
    EXPECT_FALSE(alskit::restore_latest(tmp.path()).has_value());
    EXPECT_FALSE(alskit::restore_latest(tmp.path() / "nope").has_value());
}

TEST(Checkpoints, DigestMismatchIsAConfigError) {
    testutil::ScopedTempDir tmp("ckpt");
    alskit::write_checkpoint(make_checkpoint(1, FactorKind::x, 777, 55), tmp.path());
    EXPECT_TRUE(alskit::restore_latest(tmp.path(), 777).has_value());
    EXPECT_THROW(alskit::restore_latest(tmp.path(), 778), alskit::InputError);
}

TEST(Checkpoints, CorruptFileIsAnIoError) {
    testutil::ScopedTempDir tmp("ckpt");
    const auto path = alskit::write_checkpoint(make_checkpoint(2, FactorKind::x, 1, 56), tmp.path());
    std::filesystem::resize_file(path, 30);
    EXPECT_THROW(alskit::read_checkpoint(path), alskit::IoError);
}

TEST(CheckpointWriter, WritesAllSubmittedSnapshotsInBackground) {
    testutil::ScopedTempDir tmp("ckpt");
    {
        alskit::CheckpointWriter writer(tmp.path());
        for (int t = 0; t < 3; ++t) {
            writer.submit(make_checkpoint(t, FactorKind::x, 9, 60 + static_cast<unsigned>(t)));
            writer.submit(make_checkpoint(t, FactorKind::theta, 9, 70 + static_cast<unsigned>(t)));
        }
        writer.flush();
    }
    for (int t = 0; t < 3; ++t) {
        EXPECT_TRUE(std::filesystem::exists(alskit::checkpoint_path(tmp.path(), t, FactorKind::x)));
        EXPECT_TRUE(
            std::filesystem::exists(alskit::checkpoint_path(tmp.path(), t, FactorKind::theta)));
    }
    const auto restored = alskit::restore_latest(tmp.path(), 9);
    ASSERT_TRUE(restored.has_value());
    EXPECT_EQ(restored->iteration, 2);
    EXPECT_EQ(restored->which, FactorKind::theta);
}

TEST(CheckpointWriter, FailuresSurfaceOnFlush) {
    testutil::ScopedTempDir tmp("ckpt");
    const auto blocked = tmp.path() / "target";
    write_text(blocked, "a plain file where the checkpoint directory should go");
    alskit::CheckpointWriter writer(blocked);
    writer.submit(make_checkpoint(0, FactorKind::x, 1, 80));
    EXPECT_THROW(writer.flush(), alskit::IoError);
}

}  // namespace
