//! Synthetic annotated corpora.
//!
//! The annotated production corpus is not redistributable, so tests, benches
//! and demos run on generated clauses that follow the same JSONL format. Each
//! label has its own small phrase bank, which gives retrieval and detection a
//! real (if easy) signal to work with. Label frequencies follow the class
//! proportions of the real corpus.

use std::collections::HashMap;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{Category, Clause, Corpus, Taxonomy};

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub ok_clauses: usize,
    pub abusive_clauses: usize,
    pub contracts: usize,
    /// Probability that an abusive clause gets a second label.
    pub multi_label_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { ok_clauses: 160, abusive_clauses: 40, contracts: 5, multi_label_rate: 0.2, seed: 7 }
    }
}

/// Class totals per label used as sampling weights.
const LABEL_WEIGHTS: &[(&str, u32)] = &[
    ("ILG NA", 335),
    ("ILG LPC PRO", 169),
    ("ILG RC", 97),
    ("ILG LPC", 80),
    ("ILG LPC INT", 77),
    ("ILG LPC JUS", 36),
    ("ILG acp", 18),
    ("ILG ng", 10),
    ("ILG COT", 9),
    ("ltd", 282),
    ("cr", 225),
    ("nod", 67),
    ("ter", 41),
    ("er", 39),
    ("ch", 33),
    ("des risk", 188),
    ("des uni", 184),
    ("des reser", 181),
    ("bfe", 76),
    ("des def", 46),
    ("des det", 39),
    ("des inf", 31),
    ("des lic", 22),
    ("des us", 14),
];

pub fn label_phrases(code: &str) -> &'static [&'static str] {
    match code {
        "ILG NA" => &["el usuario renuncia expresamente a cualquier derecho legal", "las garantías legales no se aplican a este servicio"],
        "ILG LPC PRO" => &["toda controversia se someterá a los tribunales de Santiago", "el usuario acepta la competencia exclusiva de tribunales extranjeros"],
        "ILG RC" => &["la empresa no responde por daño emergente ni lucro cesante", "se excluye toda responsabilidad civil contractual de la empresa"],
        "ILG LPC" => &["no procede devolución alguna de dineros pagados", "los derechos del consumidor quedan limitados por estos términos"],
        "ILG LPC INT" => &["la empresa actúa solo como intermediario sin responsabilidad por terceros proveedores", "los productos de vendedores externos son responsabilidad exclusiva de ellos"],
        "ILG LPC JUS" => &["el usuario no podrá iniciar acciones colectivas contra la empresa", "el consumidor renuncia a demandar ante el servicio nacional del consumidor"],
        "ILG acp" => &["el solo uso del sitio implica aceptación total de estos términos", "navegar en la página constituye aceptación tácita de las condiciones"],
        "ILG ng" => &["la empresa podrá negarse a vender sin expresar causa", "nos reservamos el derecho de rechazar cualquier pedido sin justificación"],
        "ILG COT" => &["la jurisdicción aplicable será determinada unilateralmente por la empresa", "los juzgados competentes serán los que la empresa designe"],
        "ltd" => &["en ningún caso seremos responsables por daños directos o indirectos", "nuestra responsabilidad máxima se limita al monto pagado en el último mes"],
        "cr" => &["podemos modificar estos términos en cualquier momento a nuestra discreción", "la empresa podrá cambiar las condiciones del contrato unilateralmente"],
        "nod" => &["los reclamos deberán presentarse por escrito dentro de tres días hábiles", "para ejercer sus derechos deberá cumplir requisitos adicionales impuestos por la empresa"],
        "ter" => &["podemos terminar su cuenta en cualquier momento sin aviso previo", "la empresa podrá poner término al servicio sin expresión de causa"],
        "er" => &["los errores de facturación serán de cargo del usuario", "el cliente asume los costos derivados de fallas administrativas de la empresa"],
        "ch" => &["las tarifas podrán ser incrementadas sin previo aviso", "el precio del plan puede cambiar a criterio exclusivo de la empresa"],
        "des risk" => &["el usuario asume todos los riesgos derivados del uso del servicio", "interrupciones por fuerza mayor serán de riesgo del cliente"],
        "des uni" => &["los términos pueden cambiar sin notificación y el uso continuado implica aceptación", "no estamos obligados a informar las modificaciones de estas condiciones"],
        "des reser" => &["nos reservamos el derecho de suspender o eliminar funciones del servicio", "la empresa podrá limitar el contenido disponible a su sola discreción"],
        "bfe" => &["la empresa podrá usar su información de manera contraria a sus intereses", "el usuario no podrá reclamar compensación alguna bajo ninguna circunstancia"],
        "des def" => &["el usuario indemnizará y mantendrá indemne a la empresa frente a reclamos", "usted se obliga a defender a la empresa en cualquier litigio"],
        "des det" => &["toda queja deberá resolverse primero mediante nuestro procedimiento interno", "los conflictos se tramitarán exclusivamente ante el área de servicio al cliente"],
        "des inf" => &["podemos compartir sus datos personales con terceros no relacionados", "su información podrá ser transferida a socios comerciales"],
        "des lic" => &["usted otorga una licencia perpetua e irrevocable sobre su contenido", "la empresa adquiere facultades amplias e ilimitadas sobre los materiales subidos"],
        "des us" => &["no somos responsables por fraudes cometidos por otros usuarios", "las interacciones entre usuarios son de exclusivo riesgo de los participantes"],
        _ => &["cláusula sin frase asociada en el generador sintético"],
    }
}

const OK_PHRASES: &[&str] = &[
    "el usuario puede contactar a soporte a través del formulario del sitio",
    "estos términos describen el funcionamiento general de la plataforma",
    "la cuenta del usuario es personal e intransferible",
    "los pedidos se despachan dentro de los plazos indicados en la confirmación",
    "el servicio está disponible para personas mayores de dieciocho años",
    "la política de privacidad explica cómo tratamos los datos",
    "los precios se expresan en pesos chilenos e incluyen impuestos",
    "el usuario debe mantener la confidencialidad de su contraseña",
    "las promociones son válidas mientras se informe su vigencia",
    "el sitio puede contener enlaces a páginas de terceros",
];

const FILLERS: &[&str] = &[
    "conforme a lo anterior", "para todos los efectos", "según corresponda", "en la medida permitida",
    "de acuerdo con la ley", "durante la vigencia del contrato", "en relación con el servicio",
    "sin perjuicio de lo dispuesto", "respecto de la cuenta", "en cualquier caso",
];

/// Generates a corpus. Deterministic given the config.
pub fn generate_corpus(config: &SyntheticConfig, taxonomy: &Taxonomy) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let weights: Vec<(&str, u32)> =
        LABEL_WEIGHTS.iter().copied().filter(|(c, _)| taxonomy.contains(c)).collect();
    let dist = WeightedIndex::new(weights.iter().map(|(_, w)| *w)).expect("nonempty weights");

    let total = config.ok_clauses + config.abusive_clauses;
    let mut kinds: Vec<bool> = std::iter::repeat(false)
        .take(config.ok_clauses)
        .chain(std::iter::repeat(true).take(config.abusive_clauses))
        .collect();
    kinds.shuffle(&mut rng);

    let contracts = config.contracts.max(1);
    let mut clauses = Vec::with_capacity(total);
    for (i, abusive) in kinds.into_iter().enumerate() {
        let contract = i * contracts / total.max(1);
        let mut labels: Vec<String> = Vec::new();
        let mut parts: Vec<String> = Vec::new();
        if abusive {
            let first = weights[dist.sample(&mut rng)].0;
            labels.push(first.to_string());
            if rng.gen_bool(config.multi_label_rate) {
                let second = pick_second(first, &weights, &dist, taxonomy, &mut rng);
                if !labels.iter().any(|l| l == second) {
                    labels.push(second.to_string());
                }
            }
            for l in &labels {
                parts.push(label_phrases(l).choose(&mut rng).unwrap().to_string());
            }
        } else {
            parts.push(OK_PHRASES.choose(&mut rng).unwrap().to_string());
        }
        parts.push(FILLERS.choose(&mut rng).unwrap().to_string());
        let text = format!("{} (sección {}).", capitalize(&parts.join(", ")), i + 1);
        taxonomy.sort_codes(&mut labels);
        clauses.push(Clause::new(format!("s{:05}", i + 1), format!("k{:03}", contract + 1), text, labels));
    }
    let companies: HashMap<String, String> = (0..contracts)
        .map(|c| (format!("k{:03}", c + 1), format!("Empresa {}", c + 1)))
        .collect();
    Corpus::from_clauses(clauses, &companies).expect("generated ids are unique")
}

fn pick_second<'a>(
    first: &str,
    weights: &[(&'a str, u32)],
    dist: &WeightedIndex<u32>,
    taxonomy: &Taxonomy,
    rng: &mut ChaCha8Rng,
) -> &'a str {
    let same_category = rng.gen_bool(0.7);
    let cat: Option<Category> = taxonomy.category_of(first);
    for _ in 0..32 {
        let cand = weights[dist.sample(rng)].0;
        if (taxonomy.category_of(cand) == cat) == same_category && cand != first {
            return cand;
        }
    }
    weights[dist.sample(rng)].0
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
