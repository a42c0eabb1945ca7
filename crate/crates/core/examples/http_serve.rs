//! Serves a simulated farm over HTTP and talks to it with the clients.
//! Pass `--hold` to keep it running for curl.

use agritwin::field::concepts;
use agritwin::http::HubClient;
use agritwin::sim::{start_world, ScenarioSpec};
use agritwin::twin::{ElementPath, TwinAccess};

fn main() -> agritwin::Result<()> {
    let world = start_world(ScenarioSpec::new("adiop1", 7))?;
    let server = world.serve("127.0.0.1:0")?;
    println!("serving on {}", server.url());

    let hub = HubClient::new(&server.url());
    for e in hub.entries()? {
        println!("{:<14} {}", e.descriptor.id.to_string(), e.descriptor.endpoint);
    }
    let twin = hub.twin(&"field-7".parse()?);
    let n = twin.get_property(&ElementPath::parse("agronomic/soilNitrogen")?)?;
    println!("field-7 {} = {:?} {}", concepts::soil_nitrogen(), n.value, n.unit);

    if std::env::args().any(|a| a == "--hold") {
        println!("try: curl {}/registry/twins", server.url());
        std::thread::park();
    }
    Ok(())
}
