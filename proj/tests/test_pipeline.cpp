// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lrc/bundle_io.hpp"
#include "lrc/calibration.hpp"
#include "lrc/compress.hpp"
#include "lrc/model.hpp"
#include "lrc/safetensors.hpp"
#include "lrc/synthetic.hpp"
#include "test_support.hpp"

using namespace lrc;
using lrc::testing::gaussian;
using lrc::testing::rel_err;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("lrc_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

class InMemorySource final : public DataSource {
 public:
  explicit InMemorySource(std::vector<ActivationBatch> batches) : batches_(std::move(batches)) {}
  Index batch_count() const override { return static_cast<Index>(batches_.size()); }
  Index width() const override { return batches_.front().width(); }
  ActivationBatch batch(Index i) const override { return batches_[static_cast<std::size_t>(i)]; }
  std::string describe() const override { return "in-memory"; }

 private:
  std::vector<ActivationBatch> batches_;
};

ModelBundle identity_model(Index dim, Index layer_count) {
  ModelBundle model;
  model.name = "identity";
  model.hidden_dim = dim;
  for (Index i = 0; i < layer_count; ++i) {
    ModelLayer layer;
    layer.activation = Nonlinearity::kIdentity;
    layer.matrices.emplace_back("fc", Eigen::MatrixXd::Identity(dim, dim));
    model.layers.push_back(std::move(layer));
  }
  return model;
}

RankAllocation full_rank_allocation(const CalibrationRun& run) {
  RankAllocation allocation;
  for (const MatrixId& id : run.matrix_order()) {
    allocation.ranks.push_back(run.spectrum(id).numerical_rank());
    allocation.budget += allocation.ranks.back();
  }
  allocation.alpha = 1.0;
  return allocation;
}

std::vector<std::uint8_t> file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("forward: identity stack is the identity") {
  const ModelBundle model = identity_model(6, 3);
  const ActivationBatch input(gaussian(9, 6, 1));
  const ActivationBatch output = forward(model, input);
  CHECK(output.values == input.values);
}

TEST_CASE("forward: single linear layer") {
  ModelBundle model;
  model.name = "one";
  model.hidden_dim = 5;
  ModelLayer layer;
  layer.activation = Nonlinearity::kIdentity;
  layer.matrices.emplace_back("fc", gaussian(5, 5, 2));
  model.layers.push_back(layer);

  const ActivationBatch input(gaussian(7, 5, 3));
  const ActivationBatch output = forward(model, input);
  CHECK((output.values - input.values * model.layers[0].matrices[0].values).cwiseAbs().maxCoeff() <=
        1e-14 * output.values.cwiseAbs().maxCoeff());
}

TEST_CASE("forward: shape mismatch names the layer") {
  ModelBundle model = identity_model(4, 2);
  try {
    forward(model, ActivationBatch(gaussian(3, 5, 4)));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("input") != std::string::npos);
  }
}

TEST_CASE("forward with hooks: captured norms match the loss spectrum head") {
  const ModelBundle model = make_toy_model(16, 3, 42);
  CalibrationRun run = CalibrationRun::for_model(model);
  const ActivationBatch input(gaussian(64, 16, 5));
  forward(model, input, &run);

  // Replay manually to get each matrix's exact output block.
  Eigen::MatrixXd hidden = input.values;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    for (const WeightMatrix& w : model.layers[i].matrices) {
      hidden = hidden * w.values;
      const Spectrum& s = run.spectrum(MatrixId{static_cast<Index>(i), w.name});
      CHECK(rel_err(loss_spectrum(s)[0], hidden.norm()) <= 1e-8);
    }
    hidden = apply_nonlinearity(model.layers[i].activation, std::move(hidden));
  }
}

TEST_CASE("calibrate: single batch equals direct accumulation") {
  const ModelBundle model = identity_model(4, 1);
  const ActivationBatch batch(Eigen::MatrixXd::Identity(4, 4));
  const InMemorySource source({batch});
  const CalibrationRun run = calibrate(model, source, 1, 0);

  CovarianceAccumulator expected(4);
  accumulate(expected, batch, model.layers[0].matrices[0]);
  CHECK(run.accumulator(MatrixId{0, "fc"}).matrix() == expected.matrix());
  CHECK(run.sample_count == 1);
}

TEST_CASE("calibrate: merged halves equal the full run") {
  const ModelBundle model = make_toy_model(12, 2, 7);
  std::vector<ActivationBatch> batches;
  for (int i = 0; i < 8; ++i) {
    batches.emplace_back(gaussian(20, 12, 100 + static_cast<std::uint64_t>(i)));
  }
  const InMemorySource full(batches);
  const CalibrationRun whole = calibrate(model, full, 8, 3);

  const InMemorySource first_half({batches.begin(), batches.begin() + 4});
  const InMemorySource second_half({batches.begin() + 4, batches.end()});
  CalibrationRun a = calibrate(model, first_half, 4, 3);
  const CalibrationRun b = calibrate(model, second_half, 4, 3);
  a.merge(b);

  for (const MatrixId& id : whole.matrix_order()) {
    const Eigen::MatrixXd& reference = whole.accumulator(id).matrix();
    CHECK((a.accumulator(id).matrix() - reference).cwiseAbs().maxCoeff() <=
          1e-12 * reference.cwiseAbs().maxCoeff());
  }
  CHECK(a.sample_count == whole.sample_count);
  const std::vector<double> beta_a = a.layer_importances();
  const std::vector<double> beta_whole = whole.layer_importances();
  for (std::size_t i = 0; i < beta_a.size(); ++i) {
    CHECK(beta_a[i] == doctest::Approx(beta_whole[i]));
  }
}

TEST_CASE("calibrate: deterministic for a fixed seed") {
  const ModelBundle model = make_toy_model(10, 2, 9);
  const GaussianSource source(10, 16, 32, 11);
  const CalibrationRun a = calibrate(model, source, 8, 5);
  const CalibrationRun b = calibrate(model, source, 8, 5);
  for (const MatrixId& id : a.matrix_order()) {
    CHECK(a.accumulator(id).matrix() == b.accumulator(id).matrix());
  }
}

TEST_CASE("calibrate: exhausted source and dimension drift") {
  const ModelBundle model = identity_model(4, 1);
  const InMemorySource small({ActivationBatch(gaussian(3, 4, 6))});
  CHECK_THROWS_AS(calibrate(model, small, 2, 0), ValidationError);
  const InMemorySource wrong({ActivationBatch(gaussian(3, 5, 6))});
  CHECK_THROWS_AS(calibrate(model, wrong, 1, 0), ShapeError);
}

TEST_CASE("compress: lossless at full numerical rank") {
  const ModelBundle model = make_toy_model(16, 3, 13);
  std::vector<ActivationBatch> batches;
  for (int i = 0; i < 4; ++i) {
    batches.emplace_back(gaussian(32, 16, 200 + static_cast<std::uint64_t>(i)));
  }
  const CalibrationRun run = calibrate(model, InMemorySource(batches), 4, 0);
  const CompressedBundle bundle = compress(model, run, full_rank_allocation(run));

  for (const ActivationBatch& batch : batches) {
    const ActivationBatch original = forward(model, batch);
    const ActivationBatch compressed = forward_compressed(bundle, batch);
    CHECK((original.values - compressed.values).norm() <= 1e-6 * original.values.norm());
  }
  CHECK(evaluate(model, bundle, batches) <= 1e-6);
}

TEST_CASE("compress: per-matrix residual equals loss_at on calibration data") {
  const ModelBundle model = make_toy_model(24, 3, 17);
  std::vector<ActivationBatch> batches;
  for (int i = 0; i < 6; ++i) {
    batches.emplace_back(gaussian(40, 24, 300 + static_cast<std::uint64_t>(i)));
  }
  const CalibrationRun run = calibrate(model, InMemorySource(batches), 6, 0);

  AllocationConfig config;
  config.target_ratio = 0.6;
  const std::vector<LayerStats> stats = collect_layer_stats(model, run);
  const RankAllocation allocation = uniform_allocation(stats, config);
  const CompressedBundle bundle = compress(model, run, allocation);

  // Stack every matrix's calibration inputs and compare the explicit residual
  // against the spectral loss.
  std::vector<Eigen::MatrixXd> inputs(static_cast<std::size_t>(model.matrix_count()));
  for (const ActivationBatch& batch : batches) {
    Eigen::MatrixXd hidden = batch.values;
    std::size_t slot = 0;
    for (const ModelLayer& layer : model.layers) {
      for (const WeightMatrix& w : layer.matrices) {
        Eigen::MatrixXd& sink = inputs[slot++];
        sink.conservativeResize(sink.rows() + hidden.rows(), hidden.cols());
        sink.bottomRows(hidden.rows()) = hidden;
        hidden = hidden * w.values;
      }
      hidden = apply_nonlinearity(layer.activation, std::move(hidden));
    }
  }
  for (std::size_t i = 0; i < bundle.matrices.size(); ++i) {
    const CompressedMatrix& m = bundle.matrices[i];
    const Eigen::MatrixXd& h = inputs[i];
    const Eigen::MatrixXd y = h * model.matrix(m.id).values;
    const double residual = (y - (h * m.factors.a) * m.factors.b).norm();
    CHECK(rel_err(residual, m.loss) <= 1e-8);
  }
}

TEST_CASE("compress: spectra are decomposed once across allocations") {
  const ModelBundle model = make_toy_model(12, 4, 19);
  const GaussianSource source(12, 24, 16, 21);
  const CalibrationRun run = calibrate(model, source, 8, 1);
  const std::vector<LayerStats> stats = collect_layer_stats(model, run);
  CHECK(run.decompose_count() == model.matrix_count());

  for (double ratio : {0.4, 0.6, 0.8}) {
    AllocationConfig config;
    config.target_ratio = ratio;
    compress(model, run, uniform_allocation(stats, config));
  }
  CHECK(run.decompose_count() == model.matrix_count());
}

TEST_CASE("compress: over-rank requests are capped and recorded") {
  ModelBundle model = identity_model(5, 1);
  // Exactly rank-2 covariance: the numerical rank of Y is 2.
  CalibrationRun run = CalibrationRun::for_model(model);
  Eigen::VectorXd diag(5);
  diag << 4, 1, 0, 0, 0;
  run.set_accumulator(MatrixId{0, "fc"},
                      CovarianceAccumulator::from_state(diag.asDiagonal(), 30));

  RankAllocation allocation;
  allocation.ranks = {4};
  allocation.budget = 4;
  const CompressedBundle bundle = compress(model, run, allocation);
  CHECK(bundle.matrices[0].capped);
  CHECK(bundle.matrices[0].factors.rank == 2);
}

TEST_CASE("evaluate: zeroed compressed model scores exactly one") {
  const ModelBundle model = make_toy_model(8, 2, 29);
  const GaussianSource source(8, 10, 4, 31);
  const CalibrationRun run = calibrate(model, source, 4, 0);
  CompressedBundle bundle = compress(model, run, full_rank_allocation(run));
  for (CompressedMatrix& m : bundle.matrices) {
    m.factors.a.setZero();
    m.factors.b.setZero();
  }
  // Zero is a fixed point of every nonlinearity tag, so the output is zero.
  CHECK(evaluate(model, bundle, materialize(source)) == 1.0);
}

TEST_CASE("evaluate: degradation grows as the ratio shrinks") {
  const ModelBundle model = make_toy_model(24, 3, 37);
  const GaussianSource source(24, 32, 16, 39);
  const CalibrationRun run = calibrate(model, source, 12, 2);
  const std::vector<LayerStats> stats = collect_layer_stats(model, run);
  const std::vector<ActivationBatch> validation = materialize(GaussianSource(24, 32, 8, 41));

  std::vector<double> errors;
  for (double ratio : {0.4, 0.8}) {
    AllocationConfig config;
    config.target_ratio = ratio;
    errors.push_back(evaluate(model, compress(model, run, uniform_allocation(stats, config)),
                              validation));
  }
  CHECK(errors[0] >= errors[1]);
}

TEST_CASE("safetensors: deterministic round trip with metadata") {
  const fs::path dir = temp_dir("st_roundtrip");
  SafeTensorsWriter writer;
  writer.set_metadata("format", "unit-test");
  const Eigen::MatrixXd a = gaussian(5, 7, 43);
  const Eigen::MatrixXd b = gaussian(3, 2, 47);
  writer.add_matrix("alpha", a);
  writer.add_matrix("beta", b, TensorDtype::kF32);
  writer.write(dir / "t.safetensors");

  const SafeTensors file = SafeTensors::read(dir / "t.safetensors");
  CHECK(file.metadata_value("format") == "unit-test");
  CHECK(file.names() == std::vector<std::string>{"alpha", "beta"});
  CHECK(file.matrix("alpha") == a);
  const Eigen::MatrixXd b_as_f32 =
      b.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  CHECK(file.matrix("beta") == b_as_f32);
  CHECK(file.entry("beta").dtype == TensorDtype::kF32);

  // Same contents serialize to the same bytes.
  CHECK(writer.serialize() == file_bytes(dir / "t.safetensors"));
}

TEST_CASE("safetensors: malformed containers are rejected") {
  const fs::path dir = temp_dir("st_bad");
  const fs::path path = dir / "t.safetensors";

  SafeTensorsWriter writer;
  writer.add_matrix("m", gaussian(4, 4, 51));
  writer.write(path);
  const std::vector<std::uint8_t> good = file_bytes(path);

  {  // truncated data section
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(good.data()),
              static_cast<std::streamsize>(good.size() - 16));
  }
  CHECK_THROWS_AS(SafeTensors::read(path), IoError);

  {  // header length beyond the file
    std::vector<std::uint8_t> bent = good;
    bent[0] = 0xff;
    bent[1] = 0xff;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bent.data()), static_cast<std::streamsize>(bent.size()));
  }
  CHECK_THROWS_AS(SafeTensors::read(path), IoError);

  {  // header is not JSON
    std::vector<std::uint8_t> bent = good;
    bent[8] = 'x';
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bent.data()), static_cast<std::streamsize>(bent.size()));
  }
  CHECK_THROWS_AS(SafeTensors::read(path), IoError);
}

TEST_CASE("bundle export/import: bit-exact round trip") {
  const ModelBundle model = make_toy_model(16, 3, 53);
  const GaussianSource source(16, 24, 12, 57);
  const CalibrationRun run = calibrate(model, source, 8, 4);
  const std::vector<LayerStats> stats = collect_layer_stats(model, run);
  AllocationConfig config;
  config.target_ratio = 0.6;
  CompressionProvenance provenance;
  provenance.strategy = "uniform";
  provenance.ratio = 0.6;
  provenance.retention = 0.5;
  provenance.seed = 4;
  const CompressedBundle bundle =
      compress(model, run, uniform_allocation(stats, config), provenance);

  const fs::path dir_a = temp_dir("bundle_a");
  const fs::path dir_b = temp_dir("bundle_b");
  export_bundle(bundle, dir_a);
  const CompressedBundle loaded = import_bundle(dir_a);

  REQUIRE(loaded.matrices.size() == bundle.matrices.size());
  for (std::size_t i = 0; i < bundle.matrices.size(); ++i) {
    CHECK(loaded.matrices[i].factors.a == bundle.matrices[i].factors.a);
    CHECK(loaded.matrices[i].factors.b == bundle.matrices[i].factors.b);
    CHECK(loaded.matrices[i].loss == bundle.matrices[i].loss);
    CHECK(loaded.matrices[i].id == bundle.matrices[i].id);
  }
  CHECK(loaded.total_parameters() == bundle.total_parameters());
  CHECK(loaded.provenance.strategy == bundle.provenance.strategy);
  CHECK(loaded.provenance.ratio == bundle.provenance.ratio);
  CHECK(loaded.provenance.alpha == bundle.provenance.alpha);

  // Re-exporting the imported bundle reproduces both files byte for byte.
  export_bundle(loaded, dir_b);
  CHECK(file_bytes(bundle_tensor_path(dir_a)) == file_bytes(bundle_tensor_path(dir_b)));
  CHECK(file_bytes(bundle_manifest_path(dir_a)) == file_bytes(bundle_manifest_path(dir_b)));
}

TEST_CASE("bundle export: stored bytes follow the parameter arithmetic") {
  const ModelBundle model = make_toy_model(12, 2, 59);
  const GaussianSource source(12, 16, 8, 61);
  const CalibrationRun run = calibrate(model, source, 4, 0);
  const std::vector<LayerStats> stats = collect_layer_stats(model, run);
  AllocationConfig config;
  config.target_ratio = 0.5;
  const CompressedBundle bundle = compress(model, run, uniform_allocation(stats, config));

  const fs::path dir = temp_dir("bundle_bytes");
  export_bundle(bundle, dir);
  const SafeTensors tensors = SafeTensors::read(bundle_tensor_path(dir));
  CHECK(tensors.data_size() ==
        static_cast<std::uint64_t>(bundle.total_parameters()) * sizeof(double));

  Index expected = 0;
  for (const CompressedMatrix& m : bundle.matrices) {
    expected += m.factors.rank * (m.original_rows + m.original_cols);
  }
  CHECK(bundle.total_parameters() == expected);
}

TEST_CASE("bundle import: corruption is detected") {
  const ModelBundle model = make_toy_model(10, 2, 63);
  const GaussianSource source(10, 12, 6, 67);
  const CalibrationRun run = calibrate(model, source, 4, 0);
  const std::vector<LayerStats> stats = collect_layer_stats(model, run);
  AllocationConfig config;
  config.target_ratio = 0.5;
  const CompressedBundle bundle = compress(model, run, uniform_allocation(stats, config));

  SUBCASE("flipped byte fails the checksum") {
    const fs::path dir = temp_dir("bundle_flip");
    export_bundle(bundle, dir);
    std::vector<std::uint8_t> bytes = file_bytes(bundle_tensor_path(dir));
    bytes[bytes.size() - 1] ^= 0x01;
    std::ofstream out(bundle_tensor_path(dir), std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.close();
    try {
      import_bundle(dir);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }
  }

  SUBCASE("truncated container fails the checksum") {
    const fs::path dir = temp_dir("bundle_trunc");
    export_bundle(bundle, dir);
    std::vector<std::uint8_t> bytes = file_bytes(bundle_tensor_path(dir));
    bytes.resize(bytes.size() - 8);
    std::ofstream out(bundle_tensor_path(dir), std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS(import_bundle(dir), IoError);
  }

  SUBCASE("manifest rank that disagrees with the tensor shape") {
    const fs::path dir = temp_dir("bundle_rank");
    export_bundle(bundle, dir);
    std::ifstream in(bundle_manifest_path(dir));
    std::string manifest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::string needle = "\"rank\": " + std::to_string(bundle.matrices[0].factors.rank);
    const std::size_t at = manifest.find(needle);
    REQUIRE(at != std::string::npos);
    manifest.replace(at, needle.size(), "\"rank\": 1");
    std::ofstream out(bundle_manifest_path(dir), std::ios::binary | std::ios::trunc);
    out << manifest;
    out.close();
    try {
      import_bundle(dir);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("rank") != std::string::npos);
    }
  }
}

TEST_CASE("calibration artifact: save and load round trip") {
  const ModelBundle model = make_toy_model(14, 3, 69);
  const GaussianSource source(14, 20, 10, 71);
  CalibrationRun run = calibrate(model, source, 6, 8);
  run.model_descriptor = "synthetic:dim=14,layers=3,seed=69";
  run.data_descriptor = source.describe();

  const fs::path dir = temp_dir("calib");
  save_calibration(run, model, dir / "stats.safetensors");
  const CalibrationRun loaded = load_calibration(dir / "stats.safetensors");

  CHECK(loaded.sample_count == run.sample_count);
  CHECK(loaded.seed == run.seed);
  CHECK(loaded.model_descriptor == run.model_descriptor);
  CHECK(loaded.matrix_order() == run.matrix_order());
  for (const MatrixId& id : run.matrix_order()) {
    CHECK(loaded.accumulator(id).matrix() == run.accumulator(id).matrix());
    CHECK(loaded.accumulator(id).row_count() == run.accumulator(id).row_count());
  }
  const std::vector<double> beta_a = run.layer_importances();
  const std::vector<double> beta_b = loaded.layer_importances();
  for (std::size_t i = 0; i < beta_a.size(); ++i) {
    CHECK(beta_a[i] == beta_b[i]);
  }

  // Saving the loaded run reproduces both files byte for byte.
  save_calibration(loaded, model, dir / "again.safetensors");
  CHECK(file_bytes(dir / "stats.safetensors") == file_bytes(dir / "again.safetensors"));
  CHECK(file_bytes(dir / "stats.json") == file_bytes(dir / "again.json"));
}

TEST_CASE("model container: save and load round trip") {
  const ModelBundle model = make_toy_model(11, 3, 73, Nonlinearity::kTanh);
  const fs::path dir = temp_dir("model_io");
  save_model(model, dir / "model.safetensors");
  const ModelBundle loaded = load_model(dir / "model.safetensors");
  CHECK(loaded.name == model.name);
  CHECK(loaded.hidden_dim == model.hidden_dim);
  REQUIRE(loaded.layers.size() == model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    CHECK(loaded.layers[i].activation == model.layers[i].activation);
    REQUIRE(loaded.layers[i].matrices.size() == model.layers[i].matrices.size());
    for (std::size_t j = 0; j < model.layers[i].matrices.size(); ++j) {
      CHECK(loaded.layers[i].matrices[j].values == model.layers[i].matrices[j].values);
    }
  }
}

TEST_CASE("synthetic descriptors: parsing and validation") {
  const SyntheticSpec spec = SyntheticSpec::parse("synthetic:dim=64,layers=4,batches=256,rows=128,seed=7");
  CHECK(spec.get_index("dim", 0) == 64);
  CHECK(spec.get_index("layers", 0) == 4);
  CHECK(spec.get_index("batches", 0) == 256);
  CHECK(spec.get_index("rows", 0) == 128);
  CHECK(spec.get_seed("seed", 0) == 7);

  try {
    SyntheticSpec::parse("synthetic:dim=64,bogus=2");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(SyntheticSpec::parse("synthetic:dim"), ValidationError);
  CHECK_THROWS_AS(SyntheticSpec::parse("synthetic:dim=abc").get_index("dim", 0), ValidationError);
}

TEST_CASE("synthetic sources and models are deterministic") {
  const GaussianSource a(8, 5, 4, 99);
  const GaussianSource b(8, 5, 4, 99);
  CHECK(a.batch(2).values == b.batch(2).values);
  CHECK(a.batch(0).values != a.batch(1).values);

  const ModelBundle m1 = open_model("synthetic:dim=8,layers=2,seed=5");
  const ModelBundle m2 = open_model("synthetic:dim=8,layers=2,seed=5");
  CHECK(m1.layers[0].matrices[0].values == m2.layers[0].matrices[0].values);
  CHECK(m1.layers[0].matrices[0].values != m1.layers[1].matrices[0].values);
}

TEST_CASE("activation dumps feed a file source") {
  const fs::path dir = temp_dir("dump");
  std::vector<ActivationBatch> batches;
  for (int i = 0; i < 3; ++i) {
    batches.emplace_back(gaussian(6, 4, 400 + static_cast<std::uint64_t>(i)));
  }
  save_activation_dump(batches, dir / "acts.safetensors");
  const TensorFileSource source(dir / "acts.safetensors");
  REQUIRE(source.batch_count() == 3);
  CHECK(source.width() == 4);
  for (Index i = 0; i < 3; ++i) {
    CHECK(source.batch(i).values == batches[static_cast<std::size_t>(i)].values);
  }
}
