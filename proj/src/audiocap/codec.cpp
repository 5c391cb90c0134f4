#include "codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "binio.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace audiocap {

namespace {

constexpr std::string_view kCodesMagic = "ACCS";
constexpr std::uint32_t kCodesVersion = 1;

double sq_dist(const double* a, const double* b, std::size_t d, double bound) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
    if (s > bound) return s;
  }
  return s;
}

double sq_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// Nearest row of a V x D matrix; ties resolve to the lower index.
std::size_t nearest_row(const Tensor& book, const double* x, double* out_dist = nullptr) {
  const auto v = book.rows(), d = book.cols();
  std::size_t best = 0;
  double best_d = sq_dist(x, book.values.data(), d, std::numeric_limits<double>::infinity());
  for (std::size_t k = 1; k < v; ++k) {
    const double dk = sq_dist(x, &book.values[k * d], d, best_d);
    if (dk < best_d) {
      best_d = dk;
      best = k;
    }
  }
  if (out_dist) *out_dist = best_d;
  return best;
}

// Lloyd iterations with centroid 0 held at the origin. k-means++ seeding
// treats the origin as an already-chosen centre.
Tensor fit_stage(const std::vector<std::vector<double>>& data, std::size_t v, int iters, Rng& rng) {
  const std::size_t n = data.size(), d = data[0].size();
  Tensor book = Tensor::matrix(v, d);

  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = sq_norm(data[i]);
  for (std::size_t k = 1; k < v; ++k) {
    double total = 0.0;
    for (double x : dist) total += x;
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      for (pick = 0; pick + 1 < n; ++pick) {
        if (u < dist[pick]) break;
        u -= dist[pick];
      }
      while (dist[pick] <= 0.0 && pick > 0) --pick;
    } else {
      pick = uniform_index(rng, n);
    }
    std::copy(data[pick].begin(), data[pick].end(), &book.values[k * d]);
    for (std::size_t i = 0; i < n; ++i)
      dist[i] = std::min(dist[i], sq_dist(data[i].data(), &book.values[k * d], d, dist[i]));
  }

  std::vector<std::size_t> assign(n, std::numeric_limits<std::size_t>::max());
  std::vector<double> sums(v * d);
  std::vector<std::size_t> counts(v);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = nearest_row(book, data[i].data(), &dist[i]);
      if (a != assign[i]) {
        assign[i] = a;
        changed = true;
      }
    }
    if (!changed) break;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < d; ++j) sums[assign[i] * d + j] += data[i][j];
    }
    for (std::size_t k = 1; k < v; ++k) {
      if (counts[k] > 0) {
        for (std::size_t j = 0; j < d; ++j) book.values[k * d + j] = sums[k * d + j] / static_cast<double>(counts[k]);
        continue;
      }
      // Empty cluster: take over the point currently worst served.
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (dist[i] > dist[far]) far = i;
      std::copy(data[far].begin(), data[far].end(), &book.values[k * d]);
      dist[far] = -1.0;
    }
  }
  std::fill_n(book.values.begin(), d, 0.0);
  return book;
}

}  // namespace

FrameTransform::FrameTransform(std::size_t dim) : dim_(dim), basis_(dim * dim) {
  for (std::size_t k = 0; k < dim; ++k) {
    const double alpha = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(dim));
    for (std::size_t n = 0; n < dim; ++n)
      basis_[k * dim + n] =
          alpha * std::cos(std::numbers::pi * (static_cast<double>(n) + 0.5) * static_cast<double>(k) / static_cast<double>(dim));
  }
}

void FrameTransform::forward(std::span<const double> in, std::span<double> out) const {
  for (std::size_t k = 0; k < dim_; ++k) {
    double s = 0.0;
    const double* row = &basis_[k * dim_];
    for (std::size_t n = 0; n < dim_; ++n) s += row[n] * in[n];
    out[k] = s;
  }
}

void FrameTransform::inverse(std::span<const double> in, std::span<double> out) const {
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(dim_), 0.0);
  for (std::size_t k = 0; k < dim_; ++k) {
    const double c = in[k];
    if (c == 0.0) continue;
    const double* row = &basis_[k * dim_];
    for (std::size_t n = 0; n < dim_; ++n) out[n] += c * row[n];
  }
}

int codec_hop(int sample_rate) {
  require(sample_rate > 0, ErrorKind::InvalidArgument, "sample rate must be positive");
  return static_cast<int>(std::lround(sample_rate / 75.0));
}

std::string serialize_codes(const CodeSequence& c) {
  ByteWriter w;
  w.raw(kCodesMagic);
  w.u32(kCodesVersion);
  w.u32(static_cast<std::uint32_t>(c.sample_rate));
  w.u32(static_cast<std::uint32_t>(c.hop));
  w.u64(c.num_frames);
  w.u32(static_cast<std::uint32_t>(c.num_stages));
  w.u64(c.num_samples);
  for (auto code : c.codes) w.u16(code);
  return w.bytes();
}

CodeSequence deserialize_codes(std::string_view bytes, const std::string& context) {
  ByteReader r(bytes, context);
  if (bytes.size() < 4 || r.raw(4) != kCodesMagic) fail(ErrorKind::CorruptFile, context + ": bad magic bytes");
  const auto version = r.u32();
  if (version != kCodesVersion)
    fail(ErrorKind::UnknownVersion, context + ": unsupported code-sequence version " + std::to_string(version));
  CodeSequence c;
  c.sample_rate = static_cast<int>(r.u32());
  c.hop = static_cast<int>(r.u32());
  c.num_frames = r.u64();
  c.num_stages = r.u32();
  c.num_samples = r.u64();
  if (c.hop <= 0 || c.num_frames != (c.num_samples + c.hop - 1) / static_cast<std::size_t>(c.hop))
    fail(ErrorKind::CorruptFile, context + ": inconsistent header");
  if (c.num_frames * c.num_stages != r.remaining() / 2 || r.remaining() % 2 != 0)
    fail(ErrorKind::CorruptFile, context + ": payload size does not match header");
  c.codes.resize(c.num_frames * c.num_stages);
  for (auto& code : c.codes) code = r.u16();
  return c;
}

void save_codes(const CodeSequence& codes, const std::string& path) { write_file_bytes(path, serialize_codes(codes)); }
CodeSequence load_codes(const std::string& path) { return deserialize_codes(read_file_bytes(path), path); }

RvqCodec::RvqCodec(int sample_rate, std::vector<Tensor> codebooks)
    : sample_rate_(sample_rate), codebooks_(std::move(codebooks)) {
  require(!codebooks_.empty(), ErrorKind::Contract, "codec needs at least one stage");
  const auto v = codebooks_[0].rows(), d = codebooks_[0].cols();
  require(v >= 2 && v <= 65536, ErrorKind::Contract, "codebook size must lie in [2, 65536]");
  for (const auto& book : codebooks_) {
    require(book.shape.size() == 2 && book.rows() == v && book.cols() == d, ErrorKind::Contract,
            "all codebooks must share shape V x D");
    require(book.all_finite(), ErrorKind::Numeric, "codebook contains non-finite values");
    for (std::size_t j = 0; j < d; ++j)
      require(book.values[j] == 0.0, ErrorKind::Contract, "codebook entry 0 must be the zero vector");
  }
  transform_ = FrameTransform(d);
}

std::size_t RvqCodec::nearest(std::size_t stage, std::span<const double> residual) const {
  return nearest_row(codebooks_.at(stage), residual.data());
}

std::vector<std::uint16_t> RvqCodec::quantize(std::span<double> residual, std::size_t stages) const {
  std::vector<std::uint16_t> out(stages);
  const auto d = dim();
  for (std::size_t s = 0; s < stages; ++s) {
    const auto k = nearest(s, residual);
    out[s] = static_cast<std::uint16_t>(k);
    const double* c = &codebooks_[s].values[k * d];
    for (std::size_t j = 0; j < d; ++j) residual[j] -= c[j];
  }
  return out;
}

Checkpoint RvqCodec::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.arch = "rvq-codec";
  ckpt.attrs["sample_rate"] = std::to_string(sample_rate_);
  ckpt.attrs["hop"] = std::to_string(hop());
  for (std::size_t s = 0; s < codebooks_.size(); ++s) ckpt.add("codebook." + std::to_string(s), codebooks_[s]);
  return ckpt;
}

RvqCodec RvqCodec::from_checkpoint(const Checkpoint& ckpt) {
  require(ckpt.arch == "rvq-codec", ErrorKind::Contract, "checkpoint is not a codec (arch '" + ckpt.arch + "')");
  std::vector<Tensor> books;
  for (std::size_t s = 0;; ++s) {
    const auto name = "codebook." + std::to_string(s);
    if (!ckpt.contains(name)) break;
    books.push_back(ckpt.get(name));
  }
  RvqCodec codec(std::stoi(ckpt.attr("sample_rate")), std::move(books));
  require(codec.hop() == std::stoi(ckpt.attr("hop")), ErrorKind::Contract, "codec hop does not match codebook width");
  return codec;
}

RvqCodec train_codebooks(std::span<const std::vector<double>> frames, int num_stages, int codebook_size, int iters,
                         std::uint64_t seed, int sample_rate, CodecTrainReport* report) {
  require(num_stages >= 1, ErrorKind::InvalidArgument, "need at least one stage");
  require(codebook_size >= 2, ErrorKind::InvalidArgument, "codebook size must be at least 2");
  require(iters >= 1, ErrorKind::InvalidArgument, "need at least one k-means iteration");
  require(frames.size() >= static_cast<std::size_t>(codebook_size), ErrorKind::Data,
          "too few frames: " + std::to_string(frames.size()) + " < codebook size " + std::to_string(codebook_size));
  const auto d = frames[0].size();
  for (const auto& f : frames) require(f.size() == d && d > 0, ErrorKind::Data, "frames must share one dimension");

  Rng rng(seed);
  std::vector<std::vector<double>> residual(frames.begin(), frames.end());
  std::vector<Tensor> books;
  if (report) report->stage_distortion.clear();
  for (int s = 0; s < num_stages; ++s) {
    Tensor book = fit_stage(residual, static_cast<std::size_t>(codebook_size), iters, rng);
    double total = 0.0;
    for (auto& r : residual) {
      const auto k = nearest_row(book, r.data());
      for (std::size_t j = 0; j < d; ++j) r[j] -= book.values[k * d + j];
      total += sq_norm(r) / static_cast<double>(d);
    }
    if (report) report->stage_distortion.push_back(total / static_cast<double>(residual.size()));
    books.push_back(std::move(book));
  }
  return RvqCodec(sample_rate, std::move(books));
}

std::vector<std::vector<double>> analysis_frames(const FrameTransform& transform, std::span<const double> samples) {
  const auto hop = transform.dim();
  const auto frames = (samples.size() + hop - 1) / hop;
  std::vector<std::vector<double>> out(frames, std::vector<double>(hop));
  std::vector<double> buf(hop);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const auto begin = t * hop;
    const auto end = std::min(samples.size(), begin + hop);
    std::copy(samples.begin() + static_cast<std::ptrdiff_t>(begin), samples.begin() + static_cast<std::ptrdiff_t>(end),
              buf.begin());
    transform.forward(buf, out[t]);
  }
  return out;
}

std::vector<std::vector<double>> analysis_frames(const RvqCodec& codec, const Waveform& wav) {
  return analysis_frames(codec.transform(), wav.samples);
}

CodeSequence encode(const RvqCodec& codec, const Waveform& wav) {
  require(!wav.samples.empty(), ErrorKind::InvalidArgument, "encode: empty waveform");
  require(wav.sample_rate == codec.sample_rate(), ErrorKind::InvalidArgument,
          "encode: waveform is " + std::to_string(wav.sample_rate) + " Hz but codec expects " +
              std::to_string(codec.sample_rate()) + " Hz; resample first");
  auto frames = analysis_frames(codec, wav);
  CodeSequence out;
  out.sample_rate = codec.sample_rate();
  out.hop = codec.hop();
  out.num_samples = wav.samples.size();
  out.num_frames = frames.size();
  out.num_stages = codec.num_stages();
  out.codes.reserve(out.num_frames * out.num_stages);
  for (auto& f : frames) {
    const auto codes = codec.quantize(f, codec.num_stages());
    out.codes.insert(out.codes.end(), codes.begin(), codes.end());
  }
  return out;
}

Waveform decode(const RvqCodec& codec, const CodeSequence& codes, std::size_t stages) {
  require(codes.num_stages == codec.num_stages() && codes.hop == codec.hop() &&
              codes.codes.size() == codes.num_frames * codes.num_stages,
          ErrorKind::Contract, "decode: code sequence does not match codec");
  if (stages == 0) stages = codec.num_stages();
  require(stages <= codec.num_stages(), ErrorKind::Contract, "decode: more stages requested than the codec has");
  const auto d = codec.dim();
  const auto v = codec.codebook_size();
  Waveform wav;
  wav.sample_rate = codes.sample_rate;
  wav.samples.assign(codes.num_frames * d, 0.0);
  std::vector<double> coeff(d);
  for (std::size_t t = 0; t < codes.num_frames; ++t) {
    std::fill(coeff.begin(), coeff.end(), 0.0);
    for (std::size_t s = 0; s < stages; ++s) {
      const auto k = codes.at(t, s);
      require(k < v, ErrorKind::Contract, "decode: code " + std::to_string(k) + " out of range");
      const double* c = &codec.codebook(s).values[k * d];
      for (std::size_t j = 0; j < d; ++j) coeff[j] += c[j];
    }
    codec.transform().inverse(coeff, std::span<double>(wav.samples).subspan(t * d, d));
  }
  wav.samples.resize(codes.num_samples);
  return wav;
}

double quantization_error(const RvqCodec& codec, std::span<const std::vector<double>> frames, std::size_t upto_stage) {
  require(upto_stage >= 1 && upto_stage <= codec.num_stages(), ErrorKind::InvalidArgument,
          "upto_stage must lie in [1, K]");
  if (frames.empty()) return 0.0;
  double total = 0.0;
  std::vector<double> r;
  for (const auto& f : frames) {
    r = f;
    codec.quantize(r, upto_stage);
    total += sq_norm(r) / static_cast<double>(codec.dim());
  }
  return total / static_cast<double>(frames.size());
}

std::vector<double> residual_energies(const RvqCodec& codec, std::span<const double> frame) {
  std::vector<double> r(frame.begin(), frame.end()), out;
  const auto d = codec.dim();
  for (std::size_t s = 0; s < codec.num_stages(); ++s) {
    const auto k = codec.nearest(s, r);
    const double* c = &codec.codebook(s).values[k * d];
    for (std::size_t j = 0; j < d; ++j) r[j] -= c[j];
    out.push_back(sq_norm(r) / static_cast<double>(d));
  }
  return out;
}

}  // namespace audiocap
