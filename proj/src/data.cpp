// SPDX-License-Identifier: Apache-2.0
#include "alphaforge/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "alphaforge/engine.hpp"
#include "alphaforge/rng.hpp"
#include "alphaforge/semantics.hpp"

namespace alphaforge {

namespace {

constexpr std::string_view kUnknownSector = "UNKNOWN";

bool is_price_field(std::string_view name) {
  return std::find(std::begin(kPriceFields), std::end(kPriceFields), name) !=
         std::end(kPriceFields);
}

// Splits one CSV record; double-quoted cells may contain commas and "" escapes.
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dates
// ---------------------------------------------------------------------------

Date parse_date(std::string_view text) {
  auto fail = [&] { throw Error(ErrorCode::kParse, "bad date '" + std::string(text) + "'"); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') fail();
  int y = 0;
  unsigned m = 0, d = 0;
  auto num = [&](std::size_t pos, std::size_t len, auto& out) {
    auto res = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    if (res.ec != std::errc{} || res.ptr != text.data() + pos + len) fail();
  };
  num(0, 4, y);
  num(5, 2, m);
  num(8, 2, d);
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) fail();
  return Date{ymd};
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

// ---------------------------------------------------------------------------
// Panel
// ---------------------------------------------------------------------------

Panel::Panel(std::vector<Date> dates, std::vector<std::string> instruments,
             std::map<std::string, Matrix, std::less<>> fields,
             std::vector<std::string> sectors)
    : dates_(std::move(dates)),
      instruments_(std::move(instruments)),
      fields_(std::move(fields)),
      sectors_(std::move(sectors)) {
  const std::size_t T = dates_.size();
  const std::size_t N = instruments_.size();
  if (T < 1 || N < 1) throw Error(ErrorCode::kInvalidArgument, "panel needs T >= 1 and N >= 1");
  for (std::size_t t = 1; t < T; ++t) {
    if (!(dates_[t - 1] < dates_[t])) {
      throw Error(ErrorCode::kInvalidArgument,
                  "dates not strictly increasing at " + format_date(dates_[t]));
    }
  }
  {
    auto sorted = instruments_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate instrument in panel");
    }
  }
  if (sectors_.empty()) sectors_.assign(N, std::string(kUnknownSector));
  if (sectors_.size() != N) throw Error(ErrorCode::kInvalidArgument, "sector list length != N");
  for (const auto& [name, m] : fields_) {
    if (m.rows != T || m.cols != N) {
      throw Error(ErrorCode::kInvalidArgument, "field '" + name + "' has mismatched shape");
    }
    const bool price = is_price_field(name);
    const bool volume = name == "volume";
    if (!price && !volume) continue;
    for (double v : m.data) {
      if (is_missing(v)) continue;
      if (!std::isfinite(v) || (price && v <= 0.0) || (volume && v < 0.0)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "field '" + name + "' holds out-of-domain value " + format_double(v));
      }
    }
  }
  std::unordered_map<std::string, int> ids;
  sector_ids_.reserve(N);
  for (const auto& s : sectors_) {
    auto [it, inserted] = ids.emplace(s, static_cast<int>(ids.size()));
    sector_ids_.push_back(it->second);
  }
  n_sectors_ = static_cast<int>(ids.size());
}

const Matrix& Panel::field(std::string_view name) const {
  auto it = fields_.find(name);
  if (it == fields_.end()) {
    throw Error(ErrorCode::kInvalidArgument, "panel has no field '" + std::string(name) + "'");
  }
  return it->second;
}

Panel Panel::slice_rows(std::size_t begin, std::size_t end) const {
  end = std::min(end, n_dates());
  if (begin >= end) throw Error(ErrorCode::kInvalidArgument, "empty panel slice");
  const std::size_t N = n_instruments();
  std::map<std::string, Matrix, std::less<>> out;
  for (const auto& [name, m] : fields_) {
    Matrix s(end - begin, N);
    std::copy(m.data.begin() + static_cast<std::ptrdiff_t>(begin * N),
              m.data.begin() + static_cast<std::ptrdiff_t>(end * N), s.data.begin());
    out.emplace(name, std::move(s));
  }
  return Panel({dates_.begin() + static_cast<std::ptrdiff_t>(begin),
                dates_.begin() + static_cast<std::ptrdiff_t>(end)},
               instruments_, std::move(out), sectors_);
}

Panel Panel::with_field(std::string name, Matrix values) const {
  auto copy = fields_;
  copy.insert_or_assign(std::move(name), std::move(values));
  return Panel(dates_, instruments_, std::move(copy), sectors_);
}

std::string Panel::fingerprint() const { return sha256_hex(to_csv(*this)); }

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

Panel parse_csv(std::string_view text, bool strict) {
  struct Row {
    Date date;
    std::string symbol;
    std::array<double, 6> values;
    std::string sector;
    std::size_t line;
  };

  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= text.size();) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw Error(ErrorCode::kParse, "empty CSV: header row required");

  auto header = split_csv_line(lines[0]);
  std::vector<std::string> header_names;
  for (auto h : header) header_names.emplace_back(trim(h));
  // Strip a UTF-8 BOM from the first column name.
  if (!header_names.empty() && header_names[0].rfind("\xEF\xBB\xBF", 0) == 0) {
    header_names[0].erase(0, 3);
  }
  auto column = [&](std::string_view name) -> int {
    for (std::size_t k = 0; k < header_names.size(); ++k)
      if (header_names[k] == name) return static_cast<int>(k);
    return -1;
  };
  const int c_date = column("date");
  const int c_symbol = column("symbol");
  const int c_sector = column("sector");
  std::array<int, 6> c_fields{};
  for (std::size_t f = 0; f < 6; ++f) {
    c_fields[f] = column(kStandardFields[f]);
    if (c_fields[f] < 0 && kStandardFields[f] != "vwap") {
      throw Error(ErrorCode::kParse, "CSV header missing column '" +
                                         std::string(kStandardFields[f]) + "'");
    }
  }
  if (c_date < 0 || c_symbol < 0) {
    throw Error(ErrorCode::kParse, "CSV header missing 'date' or 'symbol' column");
  }

  std::vector<Row> rows;
  rows.reserve(lines.size() - 1);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    const std::size_t row_no = ln + 1;  // 1-based line number in the file
    auto cells = split_csv_line(lines[ln]);
    auto cell = [&](int c) -> std::string_view {
      return c >= 0 && static_cast<std::size_t>(c) < cells.size() ? trim(cells[static_cast<std::size_t>(c)])
                                                                   : std::string_view{};
    };
    Row r;
    r.line = row_no;
    try {
      r.date = parse_date(cell(c_date));
    } catch (const Error&) {
      throw Error(ErrorCode::kParse, "row " + std::to_string(row_no) + ": bad date '" +
                                         std::string(cell(c_date)) + "'");
    }
    r.symbol = std::string(cell(c_symbol));
    if (r.symbol.empty()) {
      throw Error(ErrorCode::kParse, "row " + std::to_string(row_no) + ": empty symbol");
    }
    for (std::size_t f = 0; f < 6; ++f) {
      auto txt = cell(c_fields[f]);
      if (txt.empty()) {
        r.values[f] = kMissing;
        continue;
      }
      double v;
      try {
        v = parse_double(txt);
      } catch (const Error&) {
        throw Error(ErrorCode::kParse, "row " + std::to_string(row_no) + ": column '" +
                                           std::string(kStandardFields[f]) +
                                           "' is not a number: '" + std::string(txt) + "'");
      }
      const bool price = kStandardFields[f] != "volume";
      const bool bad = !std::isfinite(v) || (price ? v <= 0.0 : v < 0.0);
      if (bad) {
        if (strict) {
          throw Error(ErrorCode::kInvalidArgument,
                      "row " + std::to_string(row_no) + ": out-of-domain " +
                          std::string(kStandardFields[f]) + " " + std::string(txt));
        }
        v = kMissing;
      }
      r.values[f] = v;
    }
    r.sector = std::string(cell(c_sector));
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw Error(ErrorCode::kParse, "CSV has a header but no data rows");

  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.date, a.symbol) < std::tie(b.date, b.symbol);
  });
  for (std::size_t k = 1; k < rows.size(); ++k) {
    if (rows[k].date == rows[k - 1].date && rows[k].symbol == rows[k - 1].symbol) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate row for (" + format_date(rows[k].date) + ", " + rows[k].symbol +
                      ") at lines " + std::to_string(rows[k - 1].line) + " and " +
                      std::to_string(rows[k].line));
    }
  }

  std::vector<Date> dates;
  std::vector<std::string> symbols;
  for (const auto& r : rows) {
    if (dates.empty() || dates.back() != r.date) dates.push_back(r.date);
    symbols.push_back(r.symbol);
  }
  std::sort(symbols.begin(), symbols.end());
  symbols.erase(std::unique(symbols.begin(), symbols.end()), symbols.end());

  std::unordered_map<std::string, std::size_t> sym_index;
  for (std::size_t i = 0; i < symbols.size(); ++i) sym_index.emplace(symbols[i], i);

  const std::size_t T = dates.size(), N = symbols.size();
  std::array<Matrix, 6> mats;
  for (auto& m : mats) m = Matrix(T, N);
  std::vector<std::string> sectors(N);
  std::vector<bool> sector_seen(N, false);
  std::size_t t = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (k > 0 && rows[k].date != rows[k - 1].date) ++t;
    const std::size_t i = sym_index.at(rows[k].symbol);
    for (std::size_t f = 0; f < 6; ++f) mats[f](t, i) = rows[k].values[f];
    if (c_sector >= 0 && !rows[k].sector.empty()) {
      if (sector_seen[i] && sectors[i] != rows[k].sector) {
        throw Error(ErrorCode::kInvalidArgument, "symbol " + rows[k].symbol +
                                                     " has conflicting sectors '" + sectors[i] +
                                                     "' and '" + rows[k].sector + "'");
      }
      sectors[i] = rows[k].sector;
      sector_seen[i] = true;
    }
  }
  for (std::size_t i = 0; i < N; ++i)
    if (!sector_seen[i]) sectors[i] = std::string(kUnknownSector);

  std::map<std::string, Matrix, std::less<>> fields;
  for (std::size_t f = 0; f < 6; ++f) fields.emplace(kStandardFields[f], std::move(mats[f]));
  return Panel(std::move(dates), std::move(symbols), std::move(fields), std::move(sectors));
}

Panel load_csv(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), strict);
}

std::string to_csv(const Panel& panel) {
  std::string out = "date,symbol,open,high,low,close,volume,vwap,sector\n";
  std::array<const Matrix*, 6> mats{};
  for (std::size_t f = 0; f < 6; ++f) {
    mats[f] = panel.has_field(kStandardFields[f]) ? &panel.field(kStandardFields[f]) : nullptr;
  }
  // Instruments are already symbol-sorted when loaded; sort defensively for
  // panels built in code.
  std::vector<std::size_t> order(panel.n_instruments());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return panel.instruments()[a] < panel.instruments()[b];
  });
  for (std::size_t t = 0; t < panel.n_dates(); ++t) {
    const std::string date = format_date(panel.dates()[t]);
    for (std::size_t i : order) {
      out += date;
      out += ',';
      out += panel.instruments()[i];
      for (std::size_t f = 0; f < 6; ++f) {
        out += ',';
        if (mats[f]) out += format_double((*mats[f])(t, i));
      }
      out += ',';
      out += panel.sectors()[i];
      out += '\n';
    }
  }
  return out;
}

void write_csv(const Panel& panel, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << to_csv(panel);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic data and labels
// ---------------------------------------------------------------------------

SyntheticData generate_synthetic(const SynthOptions& opt) {
  if (opt.n_dates < 30) throw Error(ErrorCode::kInvalidArgument, "n_dates must be >= 30");
  if (opt.n_instruments < 4) throw Error(ErrorCode::kInvalidArgument, "n_instruments must be >= 4");
  if (opt.n_sectors < 1) throw Error(ErrorCode::kInvalidArgument, "n_sectors must be >= 1");
  if (!(opt.plant_strength >= 0.0 && opt.plant_strength <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "plant_strength must lie in [0, 1]");
  }
  std::optional<Expr> plant;
  if (opt.plant) {
    auto report = validate(*opt.plant);
    if (!report.valid()) {
      throw Error(report.verdict == Verdict::kUnitError ? ErrorCode::kUnit
                  : report.verdict == Verdict::kSyntaxError ? ErrorCode::kParse
                                                            : ErrorCode::kSemantic,
                  "plant expression rejected: " + report.to_line());
    }
    plant = parse(*opt.plant);
  }

  const std::size_t T = static_cast<std::size_t>(opt.n_dates);
  const std::size_t N = static_cast<std::size_t>(opt.n_instruments);
  auto wanted = [&](std::string_view f) {
    return opt.fields.empty() ||
           std::find(opt.fields.begin(), opt.fields.end(), f) != opt.fields.end();
  };

  Rng rng(opt.seed);
  std::vector<double> vol(N), base_volume(N), prev_close(N);
  for (std::size_t i = 0; i < N; ++i) {
    prev_close[i] = 20.0 + 80.0 * rng.uniform();
    vol[i] = 0.01 + 0.02 * rng.uniform();
    base_volume[i] = std::log(2e5 + 2e6 * rng.uniform());
  }

  std::map<std::string, Matrix, std::less<>> fields;
  for (auto f : kStandardFields)
    if (wanted(f)) fields.emplace(std::string(f), Matrix(T, N));
  auto slot = [&](std::string_view f) -> Matrix* {
    auto it = fields.find(f);
    return it == fields.end() ? nullptr : &it->second;
  };
  Matrix* m_open = slot("open");
  Matrix* m_high = slot("high");
  Matrix* m_low = slot("low");
  Matrix* m_close = slot("close");
  Matrix* m_volume = slot("volume");
  Matrix* m_vwap = slot("vwap");

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < N; ++i) {
      const double z_ret = rng.normal();
      const double z_gap = rng.normal();
      const double z_hi = rng.normal();
      const double z_lo = rng.normal();
      const double u_vwap = rng.uniform();
      const double z_vol = rng.normal();
      const double s = vol[i];
      const double open = prev_close[i] * std::exp(0.3 * s * z_gap);
      const double close = open * std::exp(s * z_ret);
      const double high = std::max(open, close) * std::exp(0.5 * s * std::abs(z_hi));
      const double low = std::min(open, close) * std::exp(-0.5 * s * std::abs(z_lo));
      const double vwap = low + u_vwap * (high - low);
      const double volume = std::exp(base_volume[i] + 0.5 * z_vol);
      if (m_open) (*m_open)(t, i) = open;
      if (m_high) (*m_high)(t, i) = high;
      if (m_low) (*m_low)(t, i) = low;
      if (m_close) (*m_close)(t, i) = close;
      if (m_volume) (*m_volume)(t, i) = volume;
      if (m_vwap) (*m_vwap)(t, i) = vwap;
      prev_close[i] = close;
    }
  }

  std::vector<Date> dates;
  dates.reserve(T);
  Date d = parse_date("2015-01-02");
  while (dates.size() < T) {
    const std::chrono::weekday wd{d};
    if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) dates.push_back(d);
    d += std::chrono::days{1};
  }
  std::vector<std::string> instruments(N), sectors(N);
  const int width = N < 10000 ? 4 : 6;
  for (std::size_t i = 0; i < N; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "S%0*zu", width, i);
    instruments[i] = buf;
    sectors[i] = "SEC" + std::to_string(i % static_cast<std::size_t>(opt.n_sectors));
  }
  Panel panel(std::move(dates), std::move(instruments), std::move(fields), std::move(sectors));

  LabelMatrix labels;
  labels.horizon = opt.horizon;
  labels.lag = opt.lag;
  if (plant) {
    const AlphaMatrix alpha = eval_batch(*plant, panel, 1);
    Matrix z(T, N);
    for (std::size_t t = 0; t < T; ++t) cs_zscore_row(alpha.values.row(t), z.row(t));
    // Label noise comes from its own stream so the prices do not depend on
    // whether a plant was requested.
    Rng noise(opt.seed ^ 0x6c6162656c73ULL);
    labels.values = Matrix(T, N);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t i = 0; i < N; ++i) {
        const double signal = is_missing(z(t, i)) ? 0.0 : z(t, i);
        labels.values(t, i) = opt.plant_strength * signal + noise.normal();
      }
    }
    const std::size_t tail = static_cast<std::size_t>(opt.horizon + opt.lag);
    for (std::size_t t = T > tail ? T - tail : 0; t < T; ++t)
      for (std::size_t i = 0; i < N; ++i) labels.values(t, i) = kMissing;
  } else if (panel.has_field("close")) {
    labels = forward_returns(panel, opt.horizon, opt.lag);
  } else {
    labels.values = Matrix(T, N);
  }
  return {std::move(panel), std::move(labels)};
}

LabelMatrix forward_returns(const Panel& panel, int horizon, int lag) {
  if (horizon < 1 || lag < 1) throw Error(ErrorCode::kInvalidArgument, "horizon and lag must be >= 1");
  const std::size_t T = panel.n_dates(), N = panel.n_instruments();
  if (static_cast<std::size_t>(horizon + lag) >= T) {
    throw Error(ErrorCode::kInvalidArgument,
                "horizon + lag >= number of bars; no label is defined");
  }
  const Matrix& close = panel.field("close");
  LabelMatrix out{Matrix(T, N), horizon, lag};
  for (std::size_t t = 0; t + horizon + lag < T; ++t) {
    for (std::size_t i = 0; i < N; ++i) {
      const double entry = close(t + lag, i);
      const double exit = close(t + lag + horizon, i);
      if (is_missing(entry) || is_missing(exit)) continue;
      out.values(t, i) = finite_or_missing(exit / entry - 1.0);
    }
  }
  return out;
}

}  // namespace alphaforge
