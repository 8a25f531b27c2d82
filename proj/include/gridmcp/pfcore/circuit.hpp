#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gridmcp::pf {

using cplx = std::complex<double>;

enum class Phase : std::uint8_t { A = 0, B = 1, C = 2 };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::A, Phase::B, Phase::C};

inline constexpr std::size_t index(Phase p) noexcept { return static_cast<std::size_t>(p); }
char phase_letter(Phase p) noexcept;

/// Subset of {a, b, c}, stored as a bit mask.
class PhaseSet {
public:
    constexpr PhaseSet() = default;
    constexpr PhaseSet(std::initializer_list<Phase> phases)
    {
        for (auto p : phases) {
            bits_ |= bit(p);
        }
    }

    static constexpr PhaseSet abc() { return PhaseSet{Phase::A, Phase::B, Phase::C}; }
    static constexpr PhaseSet from_bits(std::uint8_t bits) { PhaseSet s; s.bits_ = bits & 0x7; return s; }
    /// Parses "abc", "b", "ca" and the like (case-insensitive). Throws InvalidArgument.
    static PhaseSet parse(std::string_view text);

    constexpr bool contains(Phase p) const noexcept { return (bits_ & bit(p)) != 0; }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr std::size_t size() const noexcept
    {
        return static_cast<std::size_t>(((bits_ >> 0) & 1) + ((bits_ >> 1) & 1) + ((bits_ >> 2) & 1));
    }
    constexpr bool subset_of(PhaseSet other) const noexcept { return (bits_ & ~other.bits_) == 0; }
    constexpr std::uint8_t bits() const noexcept { return bits_; }

    void insert(Phase p) noexcept { bits_ |= bit(p); }
    PhaseSet operator|(PhaseSet o) const noexcept { return from_bits(bits_ | o.bits_); }
    PhaseSet operator&(PhaseSet o) const noexcept { return from_bits(bits_ & o.bits_); }
    bool operator==(const PhaseSet&) const = default;

    std::vector<Phase> list() const;
    std::string str() const;

private:
    static constexpr std::uint8_t bit(Phase p) { return static_cast<std::uint8_t>(1u << index(p)); }
    std::uint8_t bits_ = 0;
};

/// 3x3 complex matrix addressed by absolute phase; entries for phases a
/// branch does not carry stay zero.
struct PhaseMatrix {
    std::array<std::array<cplx, 3>, 3> m{};

    cplx& operator()(Phase r, Phase c) { return m[index(r)][index(c)]; }
    const cplx& operator()(Phase r, Phase c) const { return m[index(r)][index(c)]; }
    bool operator==(const PhaseMatrix&) const = default;
};

struct Coord {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Coord&) const = default;
};

struct Bus {
    std::string id;
    PhaseSet phases;
    double base_kv = 0.0; // line-to-line
    std::optional<Coord> coord;
};

struct SourceSpec {
    std::string bus;
    PhaseSet phases = PhaseSet::abc();
    double pu = 1.0;
    double angle_deg = 0.0;
    double base_kv = 0.0; // line-to-line
};

/// Series branch. Transformers are folded into this type as an equivalent
/// series impedance referred to the from side; `to_base_kv` then carries the
/// secondary rating.
struct LineBranch {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    PhaseSet phases;
    PhaseMatrix z_ohm;
    std::array<double, 3> shunt_b{}; // total line charging per phase, siemens
    std::optional<double> to_base_kv;
};

enum class Connection { Wye, Delta };

/// Constant-power load. `kw`/`kvar` are totals split equally over the
/// connected phases (or delta elements); negative kW models injection.
struct LoadSpec {
    std::string id;
    std::string bus;
    PhaseSet phases;
    Connection connection = Connection::Wye;
    double kw = 0.0;
    double kvar = 0.0;
    std::optional<std::string> shape_ref;
};

/// Capacitor or reactor bank rated at 1 p.u. voltage; kvar split equally over phases.
struct ShuntBank {
    std::string id;
    std::string bus;
    PhaseSet phases;
    double kvar = 0.0;
    bool enabled = true;
};

inline constexpr int kMinTap = -16;
inline constexpr int kMaxTap = 16;
inline constexpr double kDefaultTapStep = 0.00625;

struct RegulatorSpec {
    std::string id;
    std::string branch_ref;
    std::array<int, 3> taps{};
    double step_pu = kDefaultTapStep;

    double ratio(Phase p) const noexcept { return 1.0 + step_pu * taps[index(p)]; }
};

struct Circuit {
    std::string name;
    std::vector<Bus> buses;
    SourceSpec source;
    std::vector<LineBranch> lines;
    std::vector<LoadSpec> loads;
    std::vector<ShuntBank> capacitors;
    std::vector<ShuntBank> reactors;
    std::vector<RegulatorSpec> regulators;
    double base_kva = 5000.0;

    const Bus* find_bus(std::string_view id) const;
    Bus* find_bus(std::string_view id);
    const LineBranch* find_line(std::string_view id) const;
    const LoadSpec* find_load(std::string_view id) const;
    LoadSpec* find_load(std::string_view id);
    const RegulatorSpec* find_regulator(std::string_view id) const;
    RegulatorSpec* find_regulator(std::string_view id);
    const RegulatorSpec* regulator_on(std::string_view branch_id) const;
};

/// Checks the structural invariants: unique ids, device/bus phase
/// consistency, positive bases, radial connectivity. Throws Error.
void validate(const Circuit& circuit);

/// Per-unit impedance base of a bus (ohms).
double impedance_base(double base_kv_ll, double base_kva) noexcept;

/// Buses ordered breadth-first from the source, each paired with the index of
/// its parent branch (npos for the source). Throws NotRadial.
struct RadialOrder {
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::vector<std::size_t> bus_order;      // indices into Circuit::buses
    std::vector<std::size_t> parent_branch;  // per bus index
    std::vector<std::size_t> parent_bus;     // per bus index
};
RadialOrder radial_order(const Circuit& circuit);

/// Ids of every bus on the path source -> bus, source first.
std::vector<std::string> path_from_source(const Circuit& circuit, std::string_view bus);

/// Ids of the bus and every bus downstream of it.
std::vector<std::string> downstream_buses(const Circuit& circuit, std::string_view bus);

} // namespace gridmcp::pf
