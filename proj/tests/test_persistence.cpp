#include "doctest.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "spmem/persistence.hpp"

using namespace spmem;

namespace {

EngineConfig persist_config(std::size_t d = 16) {
    EngineConfig cfg;
    cfg.d = d;
    cfg.L = 128.0;
    cfg.K_cache = 32;
    cfg.rng_seed = 99;
    return cfg;
}

MemoryStore filled_store(std::size_t writes, std::uint64_t seed, std::size_t d = 16) {
    MemoryStore store(persist_config(d));
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 128.0);
    std::uniform_int_distribution<int> obj(0, 80);
    for (std::size_t i = 0; i < writes; ++i) {
        const int o = obj(rng);
        store.write(gaussian_vector(rng, d), {u(rng), u(rng), u(rng)}, o < 60 ? "o" + std::to_string(o) : "",
                    static_cast<double>(i % 3));
    }
    return store;
}

void require_same_result(const RetrievalResult& a, const RetrievalResult& b) {
    CHECK(a.source == b.source);
    CHECK(a.aggregate == b.aggregate);
    CHECK(a.best_stm_similarity == b.best_stm_similarity);
    REQUIRE(a.items.size() == b.items.size());
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        CHECK(a.items[i].embedding == b.items[i].embedding);
        CHECK(a.items[i].position == b.items[i].position);
        CHECK(a.items[i].descriptor == b.items[i].descriptor);
        CHECK(a.items[i].similarity == b.items[i].similarity);
        CHECK(a.items[i].token == b.items[i].token);
        CHECK(a.items[i].object_id == b.items[i].object_id);
    }
}

ErrorCode load_error(const std::vector<std::uint8_t>& bytes) {
    try {
        deserialize_store(bytes);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected a load error");
    return ErrorCode::IoError;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
}

// Rewrite the trailing checksum so only the targeted field is wrong.
void reseal(std::vector<std::uint8_t>& b) { put_u32(b, b.size() - 4, crc32_of(b.data(), b.size() - 4)); }

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("spmem_test_" + name)).string();
}

}  // namespace

TEST_CASE("crc-32 check value") {
    const char* s = "123456789";
    CHECK(crc32_of(reinterpret_cast<const std::uint8_t*>(s), 9) == 0xCBF43926u);
    CHECK(crc32_of(nullptr, 0) == 0u);
}

TEST_CASE("empty store round trip") {
    const MemoryStore store(persist_config());
    const auto bytes = serialize_store(store);
    REQUIRE(bytes.size() > 14);
    CHECK(std::memcmp(bytes.data(), "M4NV", 4) == 0);
    CHECK((bytes[4] | (bytes[5] << 8)) == kStoreFormatVersion);
    const MemoryStore back = deserialize_store(bytes);
    CHECK(back.step() == 0);
    CHECK(back.stats().leaves == 0);
    CHECK(back.stats().nodes == 0);
    CHECK(back.stats().indexed_tokens == 0);
    CHECK_THROWS_AS(back.retrieve(Embedding(16, 1.0), {1, 1, 1}), Error);
    CHECK(serialize_store(back) == bytes);
}

TEST_CASE("1000-write store gives identical retrievals after a file round trip") {
    MemoryStore store = filled_store(1000, 5);
    const std::string path = temp_path("roundtrip.m4nv");
    const std::size_t written = save_store(store, path);
    CHECK(written == std::filesystem::file_size(path));
    LoadReport report;
    MemoryStore back = load_store(path, 32, &report);
    CHECK(report.bytes == written);
    CHECK(report.verify_queries == 32);
    CHECK(report.recall >= 0.9);

    const auto sa = store.stats();
    const auto sb = back.stats();
    CHECK(sa.steps == sb.steps);
    CHECK(sa.leaves == sb.leaves);
    CHECK(sa.nodes == sb.nodes);
    CHECK(sa.edges == sb.edges);
    CHECK(sa.stm_entries == sb.stm_entries);
    CHECK(sa.indexed_tokens == sb.indexed_tokens);
    CHECK(store.stm().entries() == back.stm().entries());
    CHECK(store.rev_params() == back.rev_params());
    CHECK(store.decoders() == back.decoders());

    // The live store's index was grown incrementally; rebuild it the way load does
    // so both sides search the same graph.
    store.rebuild_index();
    Rng rng(6);
    std::uniform_real_distribution<double> u(0.0, 128.0);
    std::size_t stm = 0;
    const auto cached = store.stm().entries();
    REQUIRE(!cached.empty());
    for (int q = 0; q < 100; ++q) {
        // Odd queries replay a cached observation so the STM path is exercised.
        const StmEntry& e = cached[static_cast<std::size_t>(q) % cached.size()];
        const Embedding v = q % 2 ? e.embedding : gaussian_vector(rng, 16);
        const Position p = q % 2 ? e.position : Position{u(rng), u(rng), u(rng)};
        const auto a = store.retrieve(v, p);
        const auto b = back.retrieve(v, p);
        stm += a.source == RetrievalSource::Stm ? 1 : 0;
        require_same_result(a, b);
        require_same_result(store.ltm_retrieve(v, p), back.ltm_retrieve(v, p));
    }
    CHECK(stm >= 40);
    std::filesystem::remove(path);
}

TEST_CASE("replayed queries match without rebuilding the live index") {
    // The live index was built incrementally; the exact-scan path must agree anyway.
    const MemoryStore store = filled_store(500, 7);
    const MemoryStore back = deserialize_store(serialize_store(store));
    Rng rng(8);
    std::uniform_real_distribution<double> u(0.0, 128.0);
    for (int q = 0; q < 100; ++q) {
        const Embedding v = gaussian_vector(rng, 16);
        const Position p{u(rng), u(rng), u(rng)};
        require_same_result(store.ltm_retrieve(v, p, LtmSearch::LinearScan), back.ltm_retrieve(v, p, LtmSearch::LinearScan));
    }
}

TEST_CASE("file bytes are stable") {
    const auto a = serialize_store(filled_store(300, 9));
    const auto b = serialize_store(filled_store(300, 9));
    CHECK(a == b);
    CHECK(serialize_store(deserialize_store(a)) == a);
}

TEST_CASE("trained decoders and feature flags survive") {
    EngineConfig cfg = persist_config(8);
    MemoryFeatures f;
    f.stm = false;
    DecoderSet dec = DecoderSet::untrained(8, 8, cfg.L, 3);
    dec.mode = DecoderMode::Trained;
    MemoryStore store(cfg, f, RevBlockParams::from_config(cfg), dec);
    Rng rng(10);
    for (int i = 0; i < 50; ++i) store.write(gaussian_vector(rng, 8), {1.0 + i, 2, 3}, "x");
    const MemoryStore back = deserialize_store(serialize_store(store));
    CHECK(back.features() == f);
    CHECK(back.decoders() == dec);
    CHECK(back.config().K_cache == cfg.K_cache);
    CHECK(back.config().L == cfg.L);
}

TEST_CASE("corrupted files are rejected") {
    const auto good = serialize_store(filled_store(100, 11));

    SUBCASE("any single bit flip in the payload") {
        Rng rng(12);
        std::uniform_int_distribution<std::size_t> at(14, good.size() - 5);
        for (int t = 0; t < 50; ++t) {
            auto bad = good;
            bad[at(rng)] ^= static_cast<std::uint8_t>(1u << (t % 8));
            CHECK(load_error(bad) == ErrorCode::BadChecksum);
        }
        auto tail = good;
        tail.back() ^= 0x01;
        CHECK(load_error(tail) == ErrorCode::BadChecksum);
    }
    SUBCASE("magic") {
        auto bad = good;
        bad[0] = 'X';
        CHECK(load_error(bad) == ErrorCode::BadMagic);
        CHECK(load_error({'n', 'o', 'p', 'e', 0, 0}) == ErrorCode::BadMagic);
    }
    SUBCASE("future version") {
        auto bad = good;
        bad[4] = static_cast<std::uint8_t>(kStoreFormatVersion + 1);
        bad[5] = 0;
        reseal(bad);
        CHECK(load_error(bad) == ErrorCode::UnsupportedVersion);
    }
    SUBCASE("truncation") {
        for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{7}, good.size() / 2, good.size() - 1}) {
            const std::vector<std::uint8_t> bad(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(keep));
            CHECK(load_error(bad) == ErrorCode::TruncatedFile);
        }
    }
    SUBCASE("missing file") {
        try {
            load_store(temp_path("does_not_exist.m4nv"));
            FAIL("expected IoError");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::IoError);
        }
    }
}
