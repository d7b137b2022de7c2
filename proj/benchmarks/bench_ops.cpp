// SPDX-License-Identifier: Apache-2.0

#include "csn/matching.hpp"
#include "csn/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

using csn::Index;
using Mat = csn::Matrix<float>;

Mat random(Index rows, Index cols, std::uint64_t seed) {
  csn::Rng rng = csn::make_stream(seed, "bench");
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(csn::uniform(rng, -1.0, 1.0));
  return m;
}

void BM_Conv3x3(benchmark::State& state) {
  const Index L = state.range(0), batch = state.range(1);
  const Mat x = random(batch * L * L, 6, 1), w = random(9 * 6, 32, 2), b = random(1, 32, 3);
  for (auto _ : state) {
    csn::ad::Tape<float> tape;
    auto y = csn::ad::conv2d_same(tape.constant(x), {L, L}, tape.constant(w), tape.constant(b), 3, batch);
    benchmark::DoNotOptimize(y.value().data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Conv3x3)->Args({16, 1})->Args({16, 8})->Args({32, 8});

void BM_Lstm(benchmark::State& state) {
  const Index L = state.range(0), hid = state.range(1);
  const Mat x = random(L, 2 * hid, 4), wi = random(2 * hid, 4 * hid, 5), wh = random(hid, 4 * hid, 6), b = random(1, 4 * hid, 7);
  for (auto _ : state) {
    csn::ad::Tape<float> tape;
    csn::ad::LstmWeights<float> w{tape.constant(wi), tape.constant(wh), tape.constant(b)};
    auto y = csn::ad::lstm_sequence(tape.constant(x), w, L, false);
    benchmark::DoNotOptimize(y.value().data());
  }
}
BENCHMARK(BM_Lstm)->Args({16, 8})->Args({32, 32});

void BM_MatchingCube(benchmark::State& state) {
  const Index L = state.range(0), D = state.range(1);
  const Mat u = random(L, D, 8), r = random(L, D, 9), H = random(D, D, 10);
  for (auto _ : state) {
    csn::ad::Tape<float> tape(false);
    auto views = csn::self_attend<float>({tape.constant(u), tape.constant(r)}, {static_cast<int>(L), static_cast<int>(L)});
    auto h = tape.constant(H);
    auto cube = csn::matching_cube(views[0], views[1], h, h, h);
    benchmark::DoNotOptimize(cube.value().data());
  }
}
BENCHMARK(BM_MatchingCube)->Args({16, 16})->Args({32, 64});

void BM_WordAlignmentMap(benchmark::State& state) {
  const Index L = state.range(0), D = state.range(1), h = 8;
  const Mat s = random(L, D, 11), u = random(L, D, 12), w = random(D, D * h, 13), b1 = random(1, h, 14), v = random(1, h, 15);
  for (auto _ : state) {
    csn::ad::Tape<float> tape;
    auto m = csn::ad::bilinear_tanh_map(tape.constant(s), tape.constant(u), tape.constant(w), tape.constant(b1),
                                        tape.constant(v));
    benchmark::DoNotOptimize(m.value().data());
  }
}
BENCHMARK(BM_WordAlignmentMap)->Args({16, 16})->Args({32, 64});

}  // namespace
