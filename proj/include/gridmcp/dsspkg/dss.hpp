#pragma once

#include "gridmcp/pfcore/circuit.hpp"
#include "gridmcp/shapes/loadshape.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gridmcp::dss {

enum class DirectiveKind {
    Circuit,
    Line,
    LineCode,
    Load,
    Capacitor,
    Reactor,
    Transformer,
    RegControl,
    LoadShape,
    Redirect,
    Set,
    Solve,
};

std::string_view to_string(DirectiveKind kind) noexcept;

/// One statement of the subset. Keys are lower-case; values keep their
/// original spelling (brackets and quotes included).
struct Directive {
    DirectiveKind kind = DirectiveKind::Set;
    std::string name; // element name, or the file for Redirect
    std::vector<std::pair<std::string, std::string>> properties;
    std::string source;
    int line = 0;

    /// Last value given for `key`.
    std::optional<std::string> get(std::string_view key) const;
    bool same_content(const Directive& other) const;
};

struct ParseOutput {
    std::vector<Directive> directives;
    std::vector<std::string> warnings;
};

/// Returns the text of a redirected file, or nullopt when it cannot be found.
using RedirectResolver = std::function<std::optional<std::string>(const std::string& file)>;

/// Parses the DSS subset. Without a resolver, Redirect statements are kept as
/// directives; with one they are expanded in place.
/// Throws SyntaxError, UnresolvedRedirect, UndefinedLineCode.
ParseOutput parse_dss_subset(std::string_view text, const std::string& source = "<input>",
                             const RedirectResolver& resolver = nullptr);

/// Writes directives back out in canonical form.
std::string emit_dss(const std::vector<Directive>& directives);

struct BuiltCircuit {
    pf::Circuit circuit;
    std::vector<shapes::LoadShape> shapes; // LoadShape directives
    std::vector<std::string> warnings;
};

/// Turns expanded directives into a validated circuit. Throws ParseError for
/// bad property values and NonRadialCircuit when the network is not radial.
BuiltCircuit build_circuit(const std::vector<Directive>& directives);

} // namespace gridmcp::dss
